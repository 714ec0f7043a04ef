//! Doubly robust estimation of longitudinal causal effects on panel data.
//!
//! The crate is organised bottom-up:
//!
//! - [`panel`]: node orderings, the wide panel dataset, treatment regimes and
//!   covariate-selection strategies.
//! - [`dgp`]: a small structural-equation language, simulation of panels from
//!   it, interventions and Monte Carlo truth.
//! - [`learners`]: supervised learners and feature screeners sharing one
//!   fit/predict contract.
//! - [`superlearner`]: cross-validated stacking with simplex-constrained
//!   weights.
//! - [`ltmle`]: the sequential-regression targeted estimator with influence
//!   curve inference and clever-covariate diagnostics.
//! - [`iptw`]: the inverse-probability-weighted comparator.
//! - [`study`]: replicated simulation studies with bias and coverage metrics.

pub mod dgp;
pub mod error;
pub mod iptw;
pub mod learners;
pub mod linalg;
pub mod ltmle;
pub mod matrix;
pub mod panel;
pub mod seed;
pub mod stats;
pub mod study;
pub mod superlearner;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use matrix::Matrix;
