//! Simulation, quasi maximum likelihood estimation and order selection for
//! Lévy-driven multivariate CARMA (MCARMA) processes in Echelon form.
//!
//! - [`model`]: Kronecker indices, Echelon parameter spaces, state-space
//!   realizations and nesting maps between spaces.
//! - [`levy`]: Brownian and normal inverse Gaussian drivers, Euler–Maruyama
//!   simulation, exact Gaussian sampling and seeded random streams.
//! - [`kalman`]: sampled state recursion, steady-state Kalman filter and the
//!   quasi log-likelihood.
//! - [`qmle`]: multi-start estimation and the `H`, `I` and sandwich
//!   covariance estimators.
//! - [`selection`]: AIC, CAIC, BIC and custom criteria, candidate selection
//!   and the overfitting probability for nested spaces.
//! - [`harness`]: JSON experiment configurations and the batch commands
//!   behind the `mcarma` binary.

pub mod error;
pub mod harness;
pub mod kalman;
pub mod levy;
pub mod linalg;
pub mod model;
pub mod qmle;
pub mod scenario;
pub mod selection;

pub use error::{Error, Result};
