//! Difference-in-differences, instrumental-variables and weak-identification
//! robust inference, without `std`.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`], [`absorb`], [`ols`], [`vce`], [`wald`]: weighted least squares
//!   with absorbed fixed effects and cluster-robust covariance.
//! - [`designs`]: cohort-by-intensity regressor construction (young/old,
//!   placebo, by-cohort, spline and quadratic trend terms).
//! - [`iv`]: two-stage least squares, first-stage F, Hansen J.
//! - [`weakiv`]: Anderson-Rubin statistic, wild restricted cluster bootstrap,
//!   confidence curves and sets.
//! - [`cic`]: changes-in-changes quantile effects and Cramér-von Mises tests.
//! - [`sim`]: Monte Carlo for supergroup-based Wald DID / Wald CIC estimators.
//!
//! Everything allocates through `alloc`; IO lives in the companion `didweak`
//! crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod absorb;
pub mod cic;
pub mod data;
pub mod designs;
pub mod dist;
pub mod error;
pub mod iv;
pub mod linalg;
pub mod ols;
pub mod rng;
pub mod sim;
pub mod vce;
pub mod wald;
pub mod weakiv;

pub use data::{Column, Dataset, ModelSpec};
pub use error::{Error, Result};
pub use ols::{wls_fit, FitResult};
