//! Task probability map: one Gaussian mixture per target label, grown one
//! confirmed find at a time.
//!
//! Each find adds a component centered on the object with isotropic
//! covariance `(k * radius)^2 I` and weight `1/(m+1)`. If the new component is
//! closer to an existing one than the sum of their largest principal standard
//! deviations, the two are moment-matched into one. Weights are renormalized
//! after every update; [`decay_and_normalize`] additionally culls components
//! whose weight has faded below a threshold.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error)]
pub enum GmmError {
    #[error("no components")]
    NoComponents,
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid object radius {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn isotropic(variance: f64) -> Self {
        Self {
            xx: variance,
            xy: 0.0,
            yy: variance,
        }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * self.trace();
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = half_diff.hypot(self.xy);
        (half_tr - r, half_tr + r)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite() && self.xx > 0.0 && self.det() > 0.0
    }

    /// Largest principal standard deviation.
    pub fn max_std(&self) -> f64 {
        self.eigenvalues().1.max(0.0).sqrt()
    }

    fn outer(d: Vec2) -> Self {
        Self {
            xx: d.x * d.x,
            xy: d.x * d.y,
            yy: d.y * d.y,
        }
    }

    fn add(self, o: Cov2) -> Self {
        Self {
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }

    fn scale(self, s: f64) -> Self {
        Self {
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }

    fn to_rows(self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec2,
    pub cov: Cov2,
}

impl GaussianComponent {
    /// Bivariate normal density of this component (unweighted).
    pub fn pdf(&self, x: Vec2) -> Result<f64, GmmError> {
        if !self.cov.is_positive_definite() {
            return Err(GmmError::InvalidCovariance(format!("{:?}", self.cov)));
        }
        let det = self.cov.det();
        let d = x - self.mean;
        // Σ⁻¹ = [[yy, -xy], [-xy, xx]] / det
        let maha = (self.cov.yy * d.x * d.x - 2.0 * self.cov.xy * d.x * d.y + self.cov.xx * d.y * d.y) / det;
        Ok((-0.5 * maha).exp() / (2.0 * PI * det.sqrt()))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gmm {
    pub components: Vec<GaussianComponent>,
}

impl Gmm {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    fn normalize(&mut self) {
        let total = self.weight_sum();
        if total > 0.0 {
            for c in &mut self.components {
                c.weight /= total;
            }
        }
    }
}

/// Mixture density `p(x) = Σ π_i N(x | μ_i, Σ_i)`.
pub fn density(gmm: &Gmm, x: Vec2) -> Result<f64, GmmError> {
    if gmm.is_empty() {
        return Err(GmmError::NoComponents);
    }
    gmm.components
        .iter()
        .try_fold(0.0, |acc, c| Ok(acc + c.weight * c.pdf(x)?))
}

/// Moment-matched merge of `existing` and `incoming`; the merged weight is the
/// plain sum of both weights.
pub fn merge_components(existing: &GaussianComponent, incoming: &GaussianComponent) -> GaussianComponent {
    let w = existing.weight + incoming.weight;
    let a = existing.weight / w;
    let b = incoming.weight / w;
    let mean = existing.mean * a + incoming.mean * b;
    let cov = existing
        .cov
        .add(Cov2::outer(existing.mean - mean))
        .scale(a)
        .add(incoming.cov.add(Cov2::outer(incoming.mean - mean)).scale(b));
    GaussianComponent { weight: w, mean, cov }
}

/// Divides weights by their sum, drops components below `drop_weight`, then
/// renormalizes the survivors.
pub fn decay_and_normalize(gmm: &Gmm, drop_weight: f64) -> Gmm {
    let mut out = gmm.clone();
    out.normalize();
    out.components.retain(|c| c.weight >= drop_weight);
    out.normalize();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetCandidate {
    pub position: Vec2,
    pub weight: f64,
}

/// Component means with their weights, heaviest first (stable on ties).
pub fn extract_targets(gmm: &Gmm) -> Vec<TargetCandidate> {
    let mut out: Vec<TargetCandidate> = gmm
        .components
        .iter()
        .map(|c| TargetCandidate {
            position: c.mean,
            weight: c.weight,
        })
        .collect();
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskMapParams {
    /// σ = sigma_scale × object radius for a new component.
    pub sigma_scale: f64,
    /// Components fading below this weight are culled.
    pub drop_weight: f64,
}

impl Default for TaskMapParams {
    fn default() -> Self {
        Self {
            sigma_scale: 1.0,
            drop_weight: 0.01,
        }
    }
}

/// Label → mixture of past find locations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TaskProbabilityMap {
    pub layers: BTreeMap<String, Gmm>,
}

impl TaskProbabilityMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn layer(&self, label: &str) -> Option<&Gmm> {
        self.layers.get(label).filter(|g| !g.is_empty())
    }

    /// Records a confirmed find of `label` at `p`.
    pub fn record_find(
        &mut self,
        label: &str,
        p: Vec2,
        object_radius_m: f64,
        params: &TaskMapParams,
    ) -> Result<(), GmmError> {
        if !(object_radius_m > 0.0 && object_radius_m.is_finite()) {
            return Err(GmmError::InvalidRadius(object_radius_m));
        }
        let gmm = self.layers.entry(label.to_string()).or_default();
        let sigma = params.sigma_scale * object_radius_m;
        let incoming = GaussianComponent {
            weight: 1.0 / (gmm.len() as f64 + 1.0),
            mean: p,
            cov: Cov2::isotropic(sigma * sigma),
        };
        let nearest = gmm
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.mean.distance(p), c))
            .filter(|(_, d, c)| *d < c.cov.max_std() + incoming.cov.max_std())
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _, _)| i);
        match nearest {
            Some(i) => gmm.components[i] = merge_components(&gmm.components[i], &incoming),
            None => gmm.components.push(incoming),
        }
        gmm.normalize();
        Ok(())
    }

    /// Applies [`decay_and_normalize`] to every layer.
    pub fn decay(&mut self, params: &TaskMapParams) {
        for gmm in self.layers.values_mut() {
            if !gmm.is_empty() {
                *gmm = decay_and_normalize(gmm, params.drop_weight);
            }
        }
    }

    pub fn validate(&self) -> Result<(), GmmError> {
        for (label, gmm) in &self.layers {
            for c in &gmm.components {
                if !c.cov.is_positive_definite() {
                    return Err(GmmError::InvalidCovariance(format!("layer {label}: {:?}", c.cov)));
                }
                if !(c.weight > 0.0 && c.weight <= 1.0 + 1e-12) {
                    return Err(GmmError::InvalidWeight(format!("layer {label}: {}", c.weight)));
                }
            }
            if !gmm.is_empty() && (gmm.weight_sum() - 1.0).abs() > 1e-9 {
                return Err(GmmError::InvalidWeight(format!(
                    "layer {label}: weights sum to {}",
                    gmm.weight_sum()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, GmmError> {
        let doc: BTreeMap<&str, Vec<ComponentRecord>> = self
            .layers
            .iter()
            .map(|(label, gmm)| {
                let comps = gmm
                    .components
                    .iter()
                    .map(|c| ComponentRecord {
                        pi: c.weight,
                        mu: [c.mean.x, c.mean.y],
                        sigma: c.cov.to_rows(),
                    })
                    .collect();
                (label.as_str(), comps)
            })
            .collect();
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, GmmError> {
        let doc: BTreeMap<String, Vec<ComponentRecord>> = serde_json::from_str(text)?;
        let mut map = Self::new();
        for (label, comps) in doc {
            let mut gmm = Gmm::default();
            for rec in comps {
                let [[xx, xy], [yx, yy]] = rec.sigma;
                if xy != yx {
                    return Err(GmmError::InvalidCovariance(format!("layer {label}: not symmetric")));
                }
                gmm.components.push(GaussianComponent {
                    weight: rec.pi,
                    mean: Vec2::new(rec.mu[0], rec.mu[1]),
                    cov: Cov2 { xx, xy, yy },
                });
            }
            map.layers.insert(label, gmm);
        }
        map.validate()?;
        Ok(map)
    }

    pub fn save(&self, path: &Path) -> Result<(), GmmError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, GmmError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ComponentRecord {
    pi: f64,
    mu: [f64; 2],
    sigma: [[f64; 2]; 2],
}
