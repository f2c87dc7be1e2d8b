//! Desk-scale laboratory for segmentation-histogram crop-row guidance.
//!
//! The crate models the whole loop a row-following robot runs:
//!
//! - [`world`]: parametric crop-row worlds (vineyards, pergolas, orchards) and
//!   their ground-truth lane centerlines.
//! - [`camera`]: a pinhole RGB-D camera that ray-casts vegetation masks and
//!   depth maps, plus a corruption model standing in for segmentation error.
//! - [`pipeline`]: mask accumulation, depth gating, inverse-depth weighting and
//!   the column histogram.
//! - [`guidance`]: row-center extraction from a histogram (minimum search and
//!   the zero-run baseline).
//! - [`controller`]: the quadratic velocity law with EMA smoothing.
//! - [`sim`]: rate-decoupled closed-loop episodes on unicycle kinematics.
//! - [`metrics`]: trajectory and mask evaluation.
//! - [`experiment`]: configuration files and batch runners.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod guidance;
pub mod metrics;
pub mod pipeline;
pub mod seed;
pub mod sim;
pub mod world;

pub use error::{Error, Result};
pub use grid::Grid;
