//! Numerical laboratory for Stratonovich-type Riemann sums of Gaussian
//! processes: exact simulation of fractional, bifractional and
//! sub-fractional Brownian motion, the trapezoidal sum and its Taylor
//! correction terms, the cubic-variation constants, covariance-condition
//! audits, and Monte Carlo tests of the weak change-of-variable formula.

pub mod conditions;
pub mod constants;
pub mod error;
pub mod kernels;
pub mod limitlaw;
pub mod mc;
pub mod numeric;
pub mod sampler;
pub mod stats;
pub mod variation;

pub use error::{Error, Result};
pub use kernels::{CovarianceKernel, Family, GridSpec, Regime};
pub use sampler::{factorize, sample_bm, CovarianceFactor, FactorCache, SamplePath};
