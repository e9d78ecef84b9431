//! Sharp regression-discontinuity estimation for right-censored survival
//! outcomes.
//!
//! The treatment effect is measured on the cumulative-hazard scale at the
//! cutoff `z0` of a forcing variable: `Theta(t, z0) = ∫_0^t {alpha_1 - alpha_0}(s, z0) ds`.
//! It is estimated by local-polynomial Aalen regressions fitted separately on
//! each side of the cutoff.
//!
//! Modules:
//! - [`kernel`]: boundary kernels and their moment constants.
//! - [`data`]: datasets, CSV I/O, and counting-process views.
//! - [`estimator`]: the local-polynomial Aalen paths and `Theta` estimates.
//! - [`inference`]: variance estimation, bias correction, confidence bands.
//! - [`dgp`]: simulation with known ground truth and analytic oracles.
//! - [`montecarlo`]: replicated experiments and summary reports.

pub mod config;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod format;
pub mod inference;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
pub mod normal;
pub mod quadrature;

pub use data::{Record, Side, SurvivalDataset};
pub use error::{Error, Result};
pub use estimator::{FitConfig, StepEstimate, ThetaFit};
pub use kernel::KernelSpec;
