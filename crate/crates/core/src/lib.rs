//! Goal-directed object search in a simulated 2D semantic world.
//!
//! The crate is organised bottom-up:
//!
//! - [`gridworld`]: ground truth, ray-cast sensing, the semantic occupancy grid and path search
//! - [`taskmap`]: per-label Gaussian-mixture memory of where targets were found
//! - [`dout`]: the proposer/evaluator reasoning loop that ranks panorama directions
//! - [`tsp`]: weight-discounted open-tour solvers
//! - [`planner`]: reasoning search, experienced search and the coverage fallback
//! - [`sim`]: scenarios, episodes, batches and the convergence harness
//! - [`config`]: the operator-facing configuration document

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dout;
pub mod geometry;
pub mod gridworld;
pub mod planner;
pub mod sim;
pub mod taskmap;
pub mod tsp;

pub use geometry::Vec2;
