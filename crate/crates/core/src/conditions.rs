//! Numerical audits of the covariance bounds (i)–(vi) that drive the limit
//! theorem.
//!
//! Each of (i)–(v) is a power-law bound with an unknown constant. The
//! auditor scans `s` geometrically (`s = 2^{−i}`) and `t`, `r` on uniform
//! grids, refined near the constraint boundary on the scale of `s`, and
//! reports the sup of `|quantity| / bound`. A finite sup that grows by less
//! than [`STABILITY_GROWTH`] between the resolution `res` and `res/2` counts
//! as a pass. This is a heuristic consistency check, not a proof; reports
//! always carry the raw sups.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{empirical_eta, eta_fn};
use crate::error::{Error, Result};
use crate::kernels::{CovarianceKernel, Regime};

/// Allowed relative growth of the sup between the two finest resolutions.
pub const STABILITY_GROWTH: f64 = 0.10;
/// Numerators below this are treated as exact zeros.
pub const NUMERATOR_FLOOR: f64 = 1e-14;
/// Relative tolerance of the final empirical `η(t)` for critical kernels.
pub const ETA_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Condition {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl Condition {
    pub const RATIO_CONDITIONS: [Condition; 5] = [Condition::I, Condition::II, Condition::III, Condition::IV, Condition::V];

    pub fn name(self) -> &'static str {
        match self {
            Condition::I => "i",
            Condition::II => "ii",
            Condition::III => "iii",
            Condition::IV => "iv",
            Condition::V => "v",
            Condition::VI => "vi",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "i" | "1" => Ok(Condition::I),
            "ii" | "2" => Ok(Condition::II),
            "iii" | "3" => Ok(Condition::III),
            "iv" | "4" => Ok(Condition::IV),
            "v" | "5" => Ok(Condition::V),
            "vi" | "6" => Ok(Condition::VI),
            _ => Err(Error::Domain(format!("unknown condition '{s}'"))),
        }
    }
}

/// Exponents of the bounds in conditions (ii)–(v).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentSet {
    pub theta: f64,
    pub nu: f64,
    pub lambda: f64,
    pub gamma: f64,
}

impl ExponentSet {
    /// Exponents proved for each family at criticality:
    /// `θ = 2/3`; `λ = 1/3`, or `min(2H, 1/3)` for extended bBm;
    /// `ν = 5/3` for `H < 1/2`, else `4H − 1/3`;
    /// `γ = 2/3 + 2H` for `H ≤ 1/2, K < 1`, else `5/3`.
    pub fn for_kernel(kernel: &CovarianceKernel) -> Self {
        let nu_of = |h: f64| if h < 0.5 { 5.0 / 3.0 } else { 4.0 * h - 1.0 / 3.0 };
        match *kernel {
            CovarianceKernel::Fbm { hurst } => ExponentSet {
                theta: 2.0 / 3.0,
                nu: nu_of(hurst),
                lambda: 1.0 / 3.0,
                gamma: 5.0 / 3.0,
            },
            CovarianceKernel::Bbm { hurst, k } => ExponentSet {
                theta: 2.0 / 3.0,
                nu: nu_of(hurst),
                lambda: 1.0 / 3.0,
                gamma: if hurst <= 0.5 && k < 1.0 { 2.0 / 3.0 + 2.0 * hurst } else { 5.0 / 3.0 },
            },
            CovarianceKernel::ExtBbm { hurst, .. } => ExponentSet {
                theta: 2.0 / 3.0,
                nu: nu_of(hurst),
                lambda: (2.0 * hurst).min(1.0 / 3.0),
                gamma: 5.0 / 3.0,
            },
            CovarianceKernel::Sfbm { .. } => ExponentSet {
                theta: 2.0 / 3.0,
                nu: 5.0 / 3.0,
                lambda: 1.0 / 3.0,
                gamma: 5.0 / 3.0,
            },
        }
    }

    pub fn exponent(&self, condition: Condition) -> Option<f64> {
        match condition {
            Condition::II => Some(self.theta),
            Condition::III => Some(self.nu),
            Condition::IV => Some(self.lambda),
            Condition::V => Some(self.gamma),
            Condition::I | Condition::VI => None,
        }
    }
}

fn validate_exponent(condition: Condition, value: f64) -> Result<()> {
    let ok = match condition {
        Condition::II => value > 0.5 && value < 1.0,
        Condition::III | Condition::V => value > 1.0,
        Condition::IV => value > 1.0 / 6.0 && value <= 1.0 / 3.0,
        Condition::I | Condition::VI => true,
    };
    if value.is_finite() && ok {
        Ok(())
    } else {
        let range = match condition {
            Condition::II => "(1/2, 1)",
            Condition::III | Condition::V => "(1, ∞)",
            _ => "(1/6, 1/3]",
        };
        Err(Error::Domain(format!(
            "exponent {value} for condition ({condition}) must lie in {range}"
        )))
    }
}

/// Scan point of a sup; `r` is absent for conditions that do not use it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanPoint {
    pub s: f64,
    pub t: f64,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: Condition,
    pub exponent: Option<f64>,
    pub sup_ratio: f64,
    pub argmax_point: ScanPoint,
    pub grid_resolution: usize,
    pub coarse_sup_ratio: f64,
    pub coarse_resolution: usize,
    pub growth: f64,
    pub growth_threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy)]
struct Sup {
    ratio: f64,
    point: ScanPoint,
}

impl Sup {
    const EMPTY: Sup = Sup {
        ratio: 0.0,
        point: ScanPoint {
            s: f64::NAN,
            t: f64::NAN,
            r: None,
        },
    };

    fn offer(&mut self, ratio: f64, point: ScanPoint) {
        // NaN ratios poison the sup on purpose.
        if ratio > self.ratio || (ratio.is_nan() && !self.ratio.is_nan()) || self.point.s.is_nan() {
            self.ratio = ratio;
            self.point = point;
        }
    }
}

/// `E[(X_t − X_{t−s})²]`.
fn increment_variance(kernel: &CovarianceKernel, t: f64, s: f64) -> f64 {
    let u = t - s;
    (kernel.cov(t, t) + kernel.cov(u, u)) - 2.0 * kernel.cov(t, u)
}

/// `E[(X_t − X_{t−s})(X_r − X_{r−s})]`, symmetric in `t` and `r` bit for bit.
fn increment_covariance(kernel: &CovarianceKernel, t: f64, r: f64, s: f64) -> f64 {
    (kernel.cov(t, r) + kernel.cov(t - s, r - s)) - (kernel.cov(t, r - s) + kernel.cov(t - s, r))
}

fn floored(x: f64) -> f64 {
    let a = x.abs();
    if a < NUMERATOR_FLOOR {
        0.0
    } else {
        a
    }
}

fn ratio_i(kernel: &CovarianceKernel, s: f64, t: f64) -> f64 {
    floored(increment_variance(kernel, t, s)) / s.powf(1.0 / 3.0)
}

fn ratio_ii(kernel: &CovarianceKernel, s: f64, t: f64, theta: f64) -> f64 {
    let u = t - s;
    let num = floored(kernel.cov(t, t) - kernel.cov(u, u));
    if num == 0.0 {
        return 0.0;
    }
    num * u.powf(theta) / s.powf(1.0 / 3.0 + theta)
}

fn ratio_iii(kernel: &CovarianceKernel, s: f64, t: f64, nu: f64) -> f64 {
    let num = floored(increment_variance(kernel, t, s) - increment_variance(kernel, t - s, s));
    if num == 0.0 {
        return 0.0;
    }
    num * (t - 2.0 * s).powf(nu) / s.powf(1.0 / 3.0 + nu)
}

fn ratio_iv(kernel: &CovarianceKernel, s: f64, t: f64, r: f64, lambda: f64) -> f64 {
    let num = floored(kernel.cov(r, t) - kernel.cov(r, t - s));
    if num == 0.0 {
        return 0.0;
    }
    let d = (t - r).abs();
    if d >= 2.0 * s && t >= 2.0 * s {
        num / (s * ((t - s).powf(lambda - 1.0) + d.powf(lambda - 1.0)))
    } else {
        num / s.powf(lambda)
    }
}

fn ratio_v(kernel: &CovarianceKernel, s: f64, t: f64, r: f64, gamma: f64) -> f64 {
    let num = floored(increment_covariance(kernel, t, r, s));
    if num == 0.0 {
        return 0.0;
    }
    num * (t - r).abs().powf(gamma) / s.powf(1.0 / 3.0 + gamma)
}

/// `s = 2^{−i}` for `i = 0..=res/4`.
fn s_ladder(res: usize) -> Vec<f64> {
    (0..=res / 4).map(|i| 0.5f64.powi(i as i32)).collect()
}

/// Offsets `s·2^{k/2}` up to `span`, starting at 0.
fn boundary_offsets(s: f64, span: f64) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut k = 0;
    loop {
        let o = s * 2f64.powf(k as f64 / 2.0);
        if o > span {
            break;
        }
        out.push(o);
        k += 1;
    }
    out
}

/// `res` uniform points on `[lo, hi]` plus boundary refinement from `lo`.
fn axis(lo: f64, hi: f64, s: f64, res: usize) -> Vec<f64> {
    if lo > hi {
        return Vec::new();
    }
    let mut pts: Vec<f64> = (0..res)
        .map(|i| {
            if res == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (res - 1) as f64
            }
        })
        .collect();
    pts.extend(boundary_offsets(s, hi - lo).into_iter().map(|o| lo + o));
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Second axis for conditions involving `r`: the uniform/boundary grid plus
/// points at distance `s·c` from `t` on both sides.
fn r_axis(lo: f64, hi: f64, t: f64, s: f64, res: usize) -> Vec<f64> {
    let mut pts = axis(lo, hi, s, res);
    for o in boundary_offsets(s, hi - lo).into_iter().chain([s, 2.0 * s]) {
        for r in [t - o, t + o] {
            if r >= lo && r <= hi {
                pts.push(r);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

fn scan(kernel: &CovarianceKernel, condition: Condition, horizon: f64, res: usize, exponent: f64) -> Sup {
    let per_s: Vec<Sup> = s_ladder(res)
        .into_par_iter()
        .map(|s| {
            let mut sup = Sup::EMPTY;
            let two_point = |lo: f64, sup: &mut Sup, f: &dyn Fn(f64) -> f64| {
                for t in axis(lo, horizon, s, res) {
                    sup.offer(f(t), ScanPoint { s, t, r: None });
                }
            };
            match condition {
                Condition::I => two_point(s, &mut sup, &|t| ratio_i(kernel, s, t)),
                Condition::II => two_point(s, &mut sup, &|t| ratio_ii(kernel, s, t, exponent)),
                Condition::III => two_point(4.0 * s, &mut sup, &|t| ratio_iii(kernel, s, t, exponent)),
                Condition::IV => {
                    for t in axis(s, horizon, s, res) {
                        let mut rs = r_axis(s, horizon, t, s, res);
                        rs.push(0.0);
                        for r in rs {
                            sup.offer(ratio_iv(kernel, s, t, r, exponent), ScanPoint { s, t, r: Some(r) });
                        }
                    }
                }
                Condition::V => {
                    for t in axis(2.0 * s, horizon, s, res) {
                        for r in r_axis(2.0 * s, horizon, t, s, res) {
                            if (t - r).abs() >= 2.0 * s {
                                sup.offer(ratio_v(kernel, s, t, r, exponent), ScanPoint { s, t, r: Some(r) });
                            }
                        }
                    }
                }
                Condition::VI => unreachable!("condition (vi) is not a ratio scan"),
            }
            sup
        })
        .collect();
    let mut total = Sup::EMPTY;
    for sup in per_s {
        total.offer(sup.ratio, sup.point);
    }
    total
}

fn check_ratio(
    kernel: &CovarianceKernel,
    condition: Condition,
    horizon: f64,
    res: usize,
    exponent: Option<f64>,
) -> Result<ConditionReport> {
    if res < 8 {
        return Err(Error::Domain(format!("resolution must be at least 8, got {res}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if horizon < 1.0 {
        return Err(Error::Domain(format!(
            "horizon {horizon} is shorter than the largest scanned s = 1"
        )));
    }
    let e = exponent.unwrap_or(f64::NAN);
    if let Some(v) = exponent {
        validate_exponent(condition, v)?;
    }
    let fine = scan(kernel, condition, horizon, res, e);
    let coarse = scan(kernel, condition, horizon, res / 2, e);
    let growth = if fine.ratio == 0.0 && coarse.ratio == 0.0 {
        0.0
    } else {
        fine.ratio / coarse.ratio - 1.0
    };
    let pass = fine.ratio.is_finite() && coarse.ratio.is_finite() && growth < STABILITY_GROWTH;
    Ok(ConditionReport {
        condition,
        exponent,
        sup_ratio: fine.ratio,
        argmax_point: fine.point,
        grid_resolution: res,
        coarse_sup_ratio: coarse.ratio,
        coarse_resolution: res / 2,
        growth,
        growth_threshold: STABILITY_GROWTH,
        pass,
    })
}

/// `sup E[(X_t − X_{t−s})²] / s^{1/3}` over `0 < s ≤ 1`, `s ≤ t ≤ T`.
pub fn check_condition_i(kernel: &CovarianceKernel, horizon: f64, res: usize) -> Result<ConditionReport> {
    check_ratio(kernel, Condition::I, horizon, res, None)
}

/// `sup |E[X_t² − X_{t−s}²]| (t−s)^θ / s^{1/3+θ}`, `θ ∈ (1/2, 1)`.
pub fn check_condition_ii(kernel: &CovarianceKernel, horizon: f64, res: usize, theta: f64) -> Result<ConditionReport> {
    check_ratio(kernel, Condition::II, horizon, res, Some(theta))
}

/// `sup |E[(X_t − X_{t−s})² − (X_{t−s} − X_{t−2s})²]| (t−2s)^ν / s^{1/3+ν}`
/// over `t ≥ 4s`, `ν > 1`.
pub fn check_condition_iii(kernel: &CovarianceKernel, horizon: f64, res: usize, nu: f64) -> Result<ConditionReport> {
    check_ratio(kernel, Condition::III, horizon, res, Some(nu))
}

/// `sup |E[X_r (X_t − X_{t−s})]|` against `s((t−s)^{λ−1} + |t−r|^{λ−1})` when
/// `|t−r| ≥ 2s` and `t ≥ 2s`, and against `s^λ` otherwise.
pub fn check_condition_iv(kernel: &CovarianceKernel, horizon: f64, res: usize, lambda: f64) -> Result<ConditionReport> {
    check_ratio(kernel, Condition::IV, horizon, res, Some(lambda))
}

/// `sup |E[(X_t − X_{t−s})(X_r − X_{r−s})]| |t−r|^γ / s^{1/3+γ}` over
/// `t ∧ r ≥ 2s`, `|t−r| ≥ 2s`, `γ > 1`.
pub fn check_condition_v(kernel: &CovarianceKernel, horizon: f64, res: usize, gamma: f64) -> Result<ConditionReport> {
    check_ratio(kernel, Condition::V, horizon, res, Some(gamma))
}

/// Conditions (i)–(v) with the given exponents.
pub fn audit_all(kernel: &CovarianceKernel, horizon: f64, res: usize, exponents: &ExponentSet) -> Result<Vec<ConditionReport>> {
    Condition::RATIO_CONDITIONS
        .iter()
        .map(|&c| check_ratio(kernel, c, horizon, res, exponents.exponent(c)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaRow {
    pub n: usize,
    pub value: f64,
    pub distance: f64,
}

/// Empirical `η(t)` along a refinement sequence, with the predicted limit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaConvergenceReport {
    pub t: f64,
    pub rows: Vec<EtaRow>,
    pub prediction: f64,
    pub relative_error: f64,
    pub tolerance: Option<f64>,
    pub monotone: bool,
    pub pass: bool,
}

/// Tabulates `Σ_{j,k<⌊nt⌋} βₙ(j,k)³` for each `n` against the predicted
/// `η(t)` (`C·t` at criticality, 0 above it). Passes when the distance to
/// the prediction never increases and, at criticality, the last value is
/// within [`ETA_TOLERANCE`] of it.
pub fn check_condition_vi(kernel: &CovarianceKernel, t: f64, n_list: &[usize]) -> Result<EtaConvergenceReport> {
    if n_list.len() < 2 || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("n_list must be increasing with at least 2 entries".into()));
    }
    let prediction = eta_fn(kernel, 1e-12)?.at(t);
    let rows = n_list
        .iter()
        .map(|&n| {
            let value = empirical_eta(kernel, n, t)?;
            Ok(EtaRow {
                n,
                value,
                distance: (value - prediction).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].distance <= w[0].distance);
    let last = rows.last().expect("at least two rows");
    let relative_error = if prediction == 0.0 {
        last.distance
    } else {
        last.distance / prediction.abs()
    };
    let tolerance = (kernel.regime() == Regime::Critical).then_some(ETA_TOLERANCE);
    let pass = monotone && tolerance.is_none_or(|tol| relative_error <= tol);
    Ok(EtaConvergenceReport {
        t,
        rows,
        prediction,
        relative_error,
        tolerance,
        monotone,
        pass,
    })
}
