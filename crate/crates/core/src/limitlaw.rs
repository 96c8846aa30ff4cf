//! Draws from the limit law of the trapezoidal sum:
//! `f(X_t) − f(X_0) + (√6/12) ∫₀ᵗ f‴(X_s) dB_s`, with `B` a Brownian motion
//! independent of `X` and `Var(B_s) = η(s)`.
//!
//! The correction is symmetric in law (`B ↦ −B`), so the sign in front of it
//! does not change the distribution; `Sign::Plus` is the default and the
//! other sign is kept for the equivalent rearranged form of the identity.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numeric::CompensatedSum;
use crate::sampler::{sample_bm, CovarianceFactor, SamplePath, VarianceFn};
use crate::variation::TestFunction;

/// `√6/12`.
pub const CORRECTION_SCALE: f64 = 0.204_124_145_231_931_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    #[default]
    Plus,
    Minus,
}

impl Sign {
    fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// One draw of the limit law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitSample {
    pub x_t: f64,
    pub rhs: f64,
    pub correction: f64,
}

/// Draws `X` from the process stream and `B` from the driver stream of
/// `seed`, then evaluates the limit law at `t`.
pub fn sample_limit<V: VarianceFn + ?Sized>(
    factor: &CovarianceFactor,
    f: &TestFunction,
    t: f64,
    eta: &V,
    seed: u64,
    sign: Sign,
) -> Result<LimitSample> {
    let path = factor.sample_path(seed);
    limit_on_path(&path, f, t, eta, seed, sign)
}

/// Limit-law draw for a given `X` path; `B` comes from the driver stream of
/// `seed`. The stochastic integral uses left-point (Itô) sums on the grid of
/// `path`.
pub fn limit_on_path<V: VarianceFn + ?Sized>(
    path: &SamplePath,
    f: &TestFunction,
    t: f64,
    eta: &V,
    seed: u64,
    sign: Sign,
) -> Result<LimitSample> {
    let end = path.grid.index_of(t)?;
    let x_t = path.values[end];
    let x_0 = path.values[0];
    let correction = if f.third_derivative_vanishes() {
        // Still validate η so a bad variance function is reported.
        sample_bm(eta, &path.grid, seed)?;
        0.0
    } else {
        let b = sample_bm(eta, &path.grid, seed)?;
        let mut acc = CompensatedSum::new();
        for j in 0..end {
            acc.add(f.f3(path.values[j]) * (b.values[j + 1] - b.values[j]));
        }
        CORRECTION_SCALE * acc.value()
    };
    Ok(LimitSample {
        x_t,
        rhs: f.f(x_t) - f.f(x_0) + sign.factor() * correction,
        correction,
    })
}

/// `Σ_j f‴(X_{j/n})² (η((j+1)/n) − η(j/n))` over `j < ⌊nt⌋`: the variance of
/// the stochastic integral given `X`, before the `(√6/12)²` prefactor.
pub fn conditional_variance<V: VarianceFn + ?Sized>(f: &TestFunction, path: &SamplePath, eta: &V, t: f64) -> Result<f64> {
    let end = path.grid.index_of(t)?;
    let mut acc = CompensatedSum::new();
    for j in 0..end {
        let d_eta = eta.variance(path.grid.time(j + 1)) - eta.variance(path.grid.time(j));
        acc.add(f.f3(path.values[j]).powi(2) * d_eta);
    }
    Ok(acc.value())
}
