//! The limit variance `η(t)` of the cubic increment sums: the series
//! constants `C_K` (bifractional families) and `C_h` (sub-fractional), and the
//! finite-`n` double sum `Σ βₙ(j, k)³` they are the limit of.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{floor_index, CovarianceKernel, Regime};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::sampler::VarianceFn;

/// A truncated series together with a rigorous bound on the neglected tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub truncation_m: usize,
    pub tail_bound: f64,
}

/// `(m+1)^{1/3} − m^{1/3}`, written as `1 / (a² + ab + b²)` to avoid
/// cancellation for large `m`.
fn cube_root_step(m: f64) -> f64 {
    let a = (m + 1.0).cbrt();
    let b = m.cbrt();
    1.0 / (a * a + a * b + b * b)
}

/// Second difference `Δ²(m) = (m+1)^{1/3} − 2m^{1/3} + (m−1)^{1/3}` for
/// `m ≥ 1`. Strictly negative by concavity.
pub fn second_difference_cbrt(m: usize) -> f64 {
    let m = m as f64;
    cube_root_step(m) - cube_root_step(m - 1.0)
}

/// Upper bound on `Σ_{m>M} |Δ²(m)|³`.
///
/// `|Δ²(m)| ≤ (2/9)(m−1)^{−5/3}` by the mean value theorem applied to the
/// second derivative of `x^{1/3}`, and `Σ_{k≥M} k^{−5} ≤ (M−1)^{−4}/4`.
pub fn series_tail_bound(truncation: usize) -> f64 {
    if truncation < 2 {
        return f64::INFINITY;
    }
    let k = (truncation - 1) as f64;
    (8.0 / 729.0) * k.powi(-4) / 4.0
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("tolerance must be positive, got {tol}")))
    }
}

/// `S = Σ_{m≥1} Δ²(m)³`, truncated at the smallest `M` whose tail bound is
/// below `tol`.
pub fn core_series_s(tol: f64) -> Result<SeriesValue> {
    check_tol(tol)?;
    // Smallest M with (8/729)(M-1)^{-4}/4 < tol.
    let mut m = 1 + ((2.0 / (729.0 * tol)).powf(0.25).ceil() as usize).max(1);
    while series_tail_bound(m) >= tol {
        m += 1;
    }
    while m > 2 && series_tail_bound(m - 1) < tol {
        m -= 1;
    }
    let value = compensated_sum((1..=m).map(|i| second_difference_cbrt(i).powi(3)));
    Ok(SeriesValue {
        value,
        truncation_m: m,
        tail_bound: series_tail_bound(m),
    })
}

/// `C_K = 8^{−K} (8 + 2S)`, the slope of `η` for critical bifractional
/// Brownian motion (`K = 1` is fBm with `H = 1/6`).
pub fn c_k(k: f64, tol: f64) -> Result<SeriesValue> {
    check_tol(tol)?;
    if !(k > 0.0 && k < 2.0) {
        return Err(Error::Domain(format!("K must lie in (0, 2), got {k}")));
    }
    let scale = 8f64.powf(-k);
    let s = core_series_s(tol / (2.0 * scale))?;
    Ok(SeriesValue {
        value: scale * (8.0 + 2.0 * s.value),
        truncation_m: s.truncation_m,
        tail_bound: 2.0 * scale * s.tail_bound,
    })
}

/// `C_h = 1 + S/4`, the slope of `η` for sub-fractional Brownian motion with
/// `h = 1/3`. Equal to `C_K` at `K = 1`.
pub fn c_h(tol: f64) -> Result<SeriesValue> {
    check_tol(tol)?;
    let s = core_series_s(4.0 * tol)?;
    Ok(SeriesValue {
        value: 1.0 + s.value / 4.0,
        truncation_m: s.truncation_m,
        tail_bound: s.tail_bound / 4.0,
    })
}

/// `Σ_{j ∈ rows, k ∈ cols} βₙ(j, k)³`, rows summed in parallel with
/// compensated partials and reduced in index order.
pub fn increment_cube_sum(kernel: &CovarianceKernel, n: usize, rows: Range<usize>, cols: Range<usize>) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if rows.is_empty() || cols.is_empty() {
        return Ok(0.0);
    }
    let nf = n as f64;
    let col_lo = cols.start;
    // Covariances R(j/n, k/n) for the k-range needed by one row pair.
    let col_times: Vec<f64> = (col_lo..=cols.end).map(|k| k as f64 / nf).collect();
    let partials: Vec<f64> = rows
        .into_par_iter()
        .map(|j| {
            let (a0, a1) = (j as f64 / nf, (j + 1) as f64 / nf);
            let r0: Vec<f64> = col_times.iter().map(|&b| kernel.cov(a0, b)).collect();
            let r1: Vec<f64> = col_times.iter().map(|&b| kernel.cov(a1, b)).collect();
            let mut acc = CompensatedSum::new();
            for c in 0..col_times.len() - 1 {
                let beta = (r1[c + 1] + r0[c]) - (r1[c] + r0[c + 1]);
                acc.add(beta * beta * beta);
            }
            acc.value()
        })
        .collect();
    Ok(compensated_sum(partials))
}

/// The double sum `Σ_{j,k=0}^{⌊nt⌋−1} βₙ(j, k)³`, including the `j = 0` and
/// `k = 0` rows. Returns 0 when `⌊nt⌋ = 0`.
pub fn empirical_eta(kernel: &CovarianceKernel, n: usize, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    let m = floor_index(n.max(1), t);
    increment_cube_sum(kernel, n, 0..m, 0..m)
}

/// Limit variance function of the independent Brownian motion in the
/// correction term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EtaFn {
    /// Supercritical kernels: no correction.
    Zero,
    /// Critical kernels: `η(t) = slope · t`.
    Linear { slope: f64 },
}

impl EtaFn {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            EtaFn::Zero => 0.0,
            EtaFn::Linear { slope } => slope * t,
        }
    }

    pub fn slope(&self) -> f64 {
        match *self {
            EtaFn::Zero => 0.0,
            EtaFn::Linear { slope } => slope,
        }
    }
}

impl VarianceFn for EtaFn {
    fn variance(&self, t: f64) -> f64 {
        self.at(t)
    }
}

/// `η` for a kernel in the critical or supercritical regime.
pub fn eta_fn(kernel: &CovarianceKernel, tol: f64) -> Result<EtaFn> {
    match kernel.regime() {
        Regime::Supercritical => Ok(EtaFn::Zero),
        Regime::Critical => {
            let slope = match *kernel {
                CovarianceKernel::Sfbm { .. } => c_h(tol)?.value,
                _ => {
                    let (_, k) = kernel.hurst_k().expect("fractional family");
                    c_k(k, tol)?.value
                }
            };
            Ok(EtaFn::Linear { slope })
        }
        Regime::Subcritical => Err(Error::UnsupportedRegime(format!(
            "{kernel} has increment exponent {:.6} < 1/3; no limit theory for this regime",
            kernel.increment_exponent()
        ))),
    }
}
