//! Finite-support solver for adversarial identification.
//!
//! Computes the discrepancy function `T(theta)` of partially identified
//! models by linear programming, scans parameter grids for sharp identified
//! sets (structural coefficients and counterfactual parameters), and runs
//! bootstrap inference on membership hypotheses.
//!
//! The high-level entry points are:
//! - [`catalog`]: builders for the shipped model families (cross-sectional
//!   maximum score designs, panel binary choice DGPs),
//! - [`discrepancy`]: `compute_T`, grid scans, and the extremal-point
//!   variant,
//! - [`sequential`]: the nested GA/LP scheme for predetermined regressors,
//! - [`inference`]: sample statistic, bootstrap critical values, coverage,
//! - [`oracle`]: brute-force lattice verification for small instances.
//!
//! Everything is deterministic given the seeds carried in the inputs. The
//! `parallel` feature (on by default) distributes grid points, bootstrap
//! draws, and lattice enumeration over a rayon pool; disabling it yields a
//! sequential build with identical outputs.

pub mod lp;
pub mod par;
pub mod prob;

pub mod model;

pub mod discrepancy;

pub mod catalog;

pub mod oracle;

pub mod sequential;

pub mod inference;
