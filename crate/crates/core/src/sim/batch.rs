use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{make_proposer, run_episode, EpisodeKind, MemoryState, Scenario, SimError};
use crate::config::Config;
use crate::planner::Outcome;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioRef {
    Path(PathBuf),
    Inline(Box<Scenario>),
}

/// Batch description. Each `(seed, repetition)` pair is one chain that runs
/// the scenarios in order and hands memory from one episode to the next, so
/// an experienced scenario sees what the earlier ones in its chain recorded.
/// With no `seeds`, each scenario keeps its own seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub scenarios: Vec<ScenarioRef>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "one")]
    pub repetitions: usize,
}

fn one() -> usize {
    1
}

impl Manifest {
    /// Reads a manifest and loads every referenced scenario file. Relative
    /// paths resolve against the manifest's directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<Scenario>), SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(path.to_path_buf(), e))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| SimError::Manifest(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let scenarios = m.scenarios(dir)?;
        Ok((m, scenarios))
    }

    pub fn scenarios(&self, base_dir: &Path) -> Result<Vec<Scenario>, SimError> {
        self.scenarios
            .iter()
            .map(|r| match r {
                ScenarioRef::Inline(s) => Ok((**s).clone()),
                ScenarioRef::Path(p) if p.is_relative() => Scenario::load(&base_dir.join(p)),
                ScenarioRef::Path(p) => Scenario::load(p),
            })
            .collect()
    }
}

/// One CSV row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub kind: EpisodeKind,
    pub seed: u64,
    pub path_length_m: f64,
    pub steps: usize,
    pub proposer_calls: usize,
    pub outcome: Outcome,
}

/// Per-kind aggregate. Means and sample standard deviations are taken over
/// episodes that did not end in error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: EpisodeKind,
    pub episodes: usize,
    pub found: usize,
    pub errors: usize,
    pub path_length_mean: Option<f64>,
    pub path_length_std: Option<f64>,
    pub steps_mean: Option<f64>,
    pub steps_std: Option<f64>,
    pub proposer_calls_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub rows: Vec<MetricsRow>,
    pub summary: Vec<KindSummary>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (Some(mean), Some(std))
}

pub fn aggregate(rows: &[MetricsRow]) -> Vec<KindSummary> {
    let mut by_kind: BTreeMap<EpisodeKind, Vec<&MetricsRow>> = BTreeMap::new();
    for r in rows {
        by_kind.entry(r.kind).or_default().push(r);
    }
    by_kind
        .into_iter()
        .map(|(kind, rs)| {
            let ok: Vec<&&MetricsRow> = rs.iter().filter(|r| r.outcome != Outcome::Error).collect();
            let (path_length_mean, path_length_std) = mean_std(&ok.iter().map(|r| r.path_length_m).collect::<Vec<_>>());
            let (steps_mean, steps_std) = mean_std(&ok.iter().map(|r| r.steps as f64).collect::<Vec<_>>());
            let (proposer_calls_mean, _) = mean_std(&ok.iter().map(|r| r.proposer_calls as f64).collect::<Vec<_>>());
            KindSummary {
                kind,
                episodes: rs.len(),
                found: rs.iter().filter(|r| r.outcome == Outcome::Found).count(),
                errors: rs.len() - ok.len(),
                path_length_mean,
                path_length_std,
                steps_mean,
                steps_std,
                proposer_calls_mean,
            }
        })
        .collect()
}

fn run_chain(scenarios: &[Scenario], seed: Option<u64>, base: &Config) -> Vec<MetricsRow> {
    let mut memory: Option<MemoryState> = None;
    scenarios
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let error_row = |s: &Scenario| MetricsRow {
                kind: s.episode_kind,
                seed: s.seed,
                path_length_m: 0.0,
                steps: 0,
                proposer_calls: 0,
                outcome: Outcome::Error,
            };
            let episode = s.resolve(base).and_then(|r| {
                let mut p = make_proposer(&r.config.proposer)?;
                run_episode(&r, memory.as_ref(), p.as_mut())
            });
            match episode {
                Ok(out) => {
                    let t = &out.trace.totals;
                    let row = MetricsRow {
                        kind: s.episode_kind,
                        seed: s.seed,
                        path_length_m: t.path_length_m,
                        steps: t.steps,
                        proposer_calls: t.proposer_calls,
                        outcome: t.outcome,
                    };
                    memory = Some(out.memory);
                    row
                }
                Err(_) => error_row(&s),
            }
        })
        .collect()
}

/// Runs every chain, in parallel when `jobs` allows. Episode failures become
/// `error` rows and the batch continues. Row order is chain order (seed, then
/// repetition), then scenario order, independent of scheduling.
pub fn run_batch(
    manifest: &Manifest,
    scenarios: &[Scenario],
    base: &Config,
    jobs: Option<usize>,
) -> Result<BatchReport, SimError> {
    if scenarios.is_empty() {
        return Err(SimError::Manifest("no scenarios".into()));
    }
    if manifest.repetitions == 0 {
        return Err(SimError::Manifest("repetitions must be at least 1".into()));
    }
    let seeds: Vec<Option<u64>> = if manifest.seeds.is_empty() {
        vec![None]
    } else {
        manifest.seeds.iter().map(|&s| Some(s)).collect()
    };
    let chains: Vec<Option<u64>> = seeds
        .iter()
        .flat_map(|&s| std::iter::repeat_n(s, manifest.repetitions))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| SimError::Manifest(format!("cannot start worker pool: {e}")))?;
    let per_chain: Vec<Vec<MetricsRow>> = pool.install(|| {
        chains
            .par_iter()
            .map(|&seed| run_chain(scenarios, seed, base))
            .collect()
    });
    let rows: Vec<MetricsRow> = per_chain.into_iter().flatten().collect();
    let summary = aggregate(&rows);
    Ok(BatchReport { rows, summary })
}

/// Runs the batch and writes `metrics.csv`, `summary.csv` and `summary.json`.
pub fn run_batch_to_dir(
    manifest: &Manifest,
    scenarios: &[Scenario],
    base: &Config,
    jobs: Option<usize>,
    out: &Path,
) -> Result<BatchReport, SimError> {
    let report = run_batch(manifest, scenarios, base, jobs)?;
    std::fs::create_dir_all(out).map_err(|e| SimError::Io(out.to_path_buf(), e))?;
    write_csv(&out.join("metrics.csv"), &report.rows)?;
    write_csv(&out.join("summary.csv"), &report.summary)?;
    let json = serde_json::to_string_pretty(&report.summary).expect("summary serializes");
    let path = out.join("summary.json");
    std::fs::write(&path, json + "\n").map_err(|e| SimError::Io(path, e))?;
    Ok(report)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), SimError> {
    let err = |e: csv::Error| SimError::Output(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush().map_err(|e| SimError::Io(path.to_path_buf(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(kind: EpisodeKind, len: f64, outcome: Outcome) -> MetricsRow {
        MetricsRow {
            kind,
            seed: 0,
            path_length_m: len,
            steps: 1,
            proposer_calls: 1,
            outcome,
        }
    }

    #[test]
    fn aggregate_matches_hand_arithmetic() {
        let rows = vec![
            row(EpisodeKind::FirstTime, 10.0, Outcome::Found),
            row(EpisodeKind::FirstTime, 14.0, Outcome::Found),
            row(EpisodeKind::FirstTime, 99.0, Outcome::Error),
            row(EpisodeKind::ExperiencedSame, 3.0, Outcome::Exhausted),
        ];
        let s = aggregate(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].kind, EpisodeKind::FirstTime);
        assert_eq!(s[0].episodes, 3);
        assert_eq!(s[0].errors, 1);
        assert_eq!(s[0].path_length_mean, Some(12.0));
        // Sample std of {10, 14}: sqrt(8).
        assert!((s[0].path_length_std.unwrap() - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].path_length_std, Some(0.0));
        assert_eq!(s[1].found, 0);
    }

    #[test]
    fn empty_manifest_rejected() {
        let m = Manifest {
            scenarios: vec![],
            seeds: vec![1],
            repetitions: 1,
        };
        assert!(run_batch(&m, &[], &Config::default(), Some(1)).is_err());
    }

    #[test]
    fn manifest_accepts_paths_and_inline() {
        let m: Manifest = serde_json::from_str(
            r#"{"scenarios": ["a.json", {"target_label": "car", "episode_kind": "first_time"}], "seeds": [1, 2]}"#,
        )
        .unwrap();
        assert!(matches!(m.scenarios[0], ScenarioRef::Path(_)));
        assert!(matches!(m.scenarios[1], ScenarioRef::Inline(_)));
        assert_eq!(m.repetitions, 1);
    }
}
