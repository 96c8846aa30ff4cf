//! Covariance kernels for fractional Brownian motion and its bifractional and
//! sub-fractional relatives.
//!
//! | family   | covariance `R(s, t)`                                        |
//! |----------|-------------------------------------------------------------|
//! | fBm      | `½ (s^{2H} + t^{2H} − |t−s|^{2H})`                          |
//! | bBm      | `2^{−K} [(s^{2H} + t^{2H})^K − |t−s|^{2HK}]`, `K ∈ (0, 1]`  |
//! | ext. bBm | same formula with `K ∈ (1, 2)` and `HK < 1`                 |
//! | sfBm     | `s^h + t^h − ½ [(s+t)^h + |s−t|^h]`, `h ∈ (0, 2)`           |
//!
//! Increment covariances are always obtained from the four-point difference
//! of `R`, so every family shares one code path.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used to decide whether a kernel sits exactly on the critical line
/// `HK = 1/6` (or `h = 1/3`).
pub const CRITICAL_TOL: f64 = 1e-12;

/// Family tag of a [`CovarianceKernel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Fbm,
    Bbm,
    ExtBbm,
    Sfbm,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Fbm => "fbm",
            Family::Bbm => "bbm",
            Family::ExtBbm => "ext_bbm",
            Family::Sfbm => "sfbm",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "fbm" => Ok(Family::Fbm),
            "bbm" => Ok(Family::Bbm),
            "ext_bbm" | "extbbm" | "extended_bbm" => Ok(Family::ExtBbm),
            "sfbm" => Ok(Family::Sfbm),
            other => Err(Error::Domain(format!("unknown process family `{other}`"))),
        }
    }
}

/// Position of a kernel relative to the critical line where the cubic
/// variation of the process has a nontrivial limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `HK < 1/6` (or `h < 1/3`).
    Subcritical,
    /// `HK = 1/6` (or `h = 1/3`).
    Critical,
    /// `HK > 1/6` (or `h > 1/3`).
    Supercritical,
}

/// A validated covariance kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CovarianceKernel {
    Fbm { hurst: f64 },
    Bbm { hurst: f64, k: f64 },
    ExtBbm { hurst: f64, k: f64 },
    Sfbm { h: f64 },
}

fn param_err(family: Family, message: String) -> Error {
    Error::Parameter {
        family: family.name(),
        message,
    }
}

fn check_finite(family: Family, name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(param_err(family, format!("{name} must be finite, got {v}")))
    }
}

impl CovarianceKernel {
    pub fn fbm(hurst: f64) -> Result<Self> {
        check_finite(Family::Fbm, "H", hurst)?;
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(param_err(Family::Fbm, format!("H must lie in (0, 1), got {hurst}")));
        }
        Ok(CovarianceKernel::Fbm { hurst })
    }

    pub fn bbm(hurst: f64, k: f64) -> Result<Self> {
        check_finite(Family::Bbm, "H", hurst)?;
        check_finite(Family::Bbm, "K", k)?;
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(param_err(Family::Bbm, format!("H must lie in (0, 1), got {hurst}")));
        }
        if !(k > 0.0 && k <= 1.0) {
            return Err(param_err(Family::Bbm, format!("K must lie in (0, 1], got {k}")));
        }
        Ok(CovarianceKernel::Bbm { hurst, k })
    }

    pub fn ext_bbm(hurst: f64, k: f64) -> Result<Self> {
        check_finite(Family::ExtBbm, "H", hurst)?;
        check_finite(Family::ExtBbm, "K", k)?;
        if !(k > 1.0 && k < 2.0) {
            return Err(param_err(Family::ExtBbm, format!("K must lie in (1, 2), got {k}")));
        }
        let hk = hurst * k;
        if !(hurst > 0.0 && hk < 1.0) {
            return Err(param_err(
                Family::ExtBbm,
                format!("need H > 0 and HK < 1, got H={hurst}, HK={hk}"),
            ));
        }
        Ok(CovarianceKernel::ExtBbm { hurst, k })
    }

    pub fn sfbm(h: f64) -> Result<Self> {
        check_finite(Family::Sfbm, "h", h)?;
        if !(h > 0.0 && h < 2.0) {
            return Err(param_err(Family::Sfbm, format!("h must lie in (0, 2), got {h}")));
        }
        Ok(CovarianceKernel::Sfbm { h })
    }

    /// Builds a kernel from a family tag and named parameters. `k` defaults to
    /// 1 for bBm; unused parameters are ignored.
    pub fn from_parts(family: Family, hurst: Option<f64>, k: Option<f64>, h: Option<f64>) -> Result<Self> {
        let need = |name: &str, v: Option<f64>| {
            v.ok_or_else(|| param_err(family, format!("missing parameter {name}")))
        };
        match family {
            Family::Fbm => Self::fbm(need("H", hurst)?),
            Family::Bbm => Self::bbm(need("H", hurst)?, k.unwrap_or(1.0)),
            Family::ExtBbm => Self::ext_bbm(need("H", hurst)?, need("K", k)?),
            Family::Sfbm => Self::sfbm(need("h", h)?),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            CovarianceKernel::Fbm { .. } => Family::Fbm,
            CovarianceKernel::Bbm { .. } => Family::Bbm,
            CovarianceKernel::ExtBbm { .. } => Family::ExtBbm,
            CovarianceKernel::Sfbm { .. } => Family::Sfbm,
        }
    }

    /// `(H, K)` for the fractional families; `None` for sfBm.
    pub fn hurst_k(&self) -> Option<(f64, f64)> {
        match *self {
            CovarianceKernel::Fbm { hurst } => Some((hurst, 1.0)),
            CovarianceKernel::Bbm { hurst, k } | CovarianceKernel::ExtBbm { hurst, k } => Some((hurst, k)),
            CovarianceKernel::Sfbm { .. } => None,
        }
    }

    /// Exponent `α` with `E[(X_t − X_{t−s})²] ≍ s^α`: `2HK`, or `h` for sfBm.
    pub fn increment_exponent(&self) -> f64 {
        match *self {
            CovarianceKernel::Sfbm { h } => h,
            _ => {
                let (hurst, k) = self.hurst_k().expect("fractional family");
                2.0 * hurst * k
            }
        }
    }

    /// Regime relative to the critical exponent 1/3.
    pub fn regime(&self) -> Regime {
        let alpha = self.increment_exponent();
        let third = 1.0 / 3.0;
        if (alpha - third).abs() < 2.0 * CRITICAL_TOL {
            Regime::Critical
        } else if alpha > third {
            Regime::Supercritical
        } else {
            Regime::Subcritical
        }
    }

    /// Covariance `R(s, t)`. Negative times are rejected.
    pub fn eval_r(&self, s: f64, t: f64) -> Result<f64> {
        if !(s >= 0.0 && t >= 0.0) || !s.is_finite() || !t.is_finite() {
            return Err(Error::Domain(format!("times must be finite and non-negative, got ({s}, {t})")));
        }
        Ok(self.cov(s, t))
    }

    /// Unchecked covariance for internal hot loops; callers guarantee
    /// `s, t ≥ 0`.
    #[inline]
    pub(crate) fn cov(&self, s: f64, t: f64) -> f64 {
        // X_0 = 0; the closed forms only cancel to round-off there.
        if s == 0.0 || t == 0.0 {
            return 0.0;
        }
        match *self {
            CovarianceKernel::Fbm { hurst } => {
                let e = 2.0 * hurst;
                0.5 * (s.powf(e) + t.powf(e) - abs_pow(t - s, e))
            }
            CovarianceKernel::Bbm { hurst, k } | CovarianceKernel::ExtBbm { hurst, k } => {
                let e = 2.0 * hurst;
                let scale = 2f64.powf(-k);
                scale * ((s.powf(e) + t.powf(e)).powf(k) - abs_pow(t - s, e * k))
            }
            CovarianceKernel::Sfbm { h } => {
                s.powf(h) + t.powf(h) - 0.5 * ((s + t).powf(h) + abs_pow(t - s, h))
            }
        }
    }

    /// Covariance of the `j`-th and `k`-th increments on the grid with mesh
    /// `1/n`.
    pub fn beta(&self, n: usize, j: usize, k: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        Ok(self.beta_unchecked(n as f64, j as f64, k as f64))
    }

    #[inline]
    pub(crate) fn beta_unchecked(&self, n: f64, j: f64, k: f64) -> f64 {
        let (a0, a1) = (j / n, (j + 1.0) / n);
        let (b0, b1) = (k / n, (k + 1.0) / n);
        // Grouped so that swapping j and k is bit-exact.
        (self.cov(a1, b1) + self.cov(a0, b0)) - (self.cov(a1, b0) + self.cov(a0, b1))
    }

    /// Splits the unit-mesh increment covariance at integer lags into a
    /// position term and a distance term.
    ///
    /// For bBm and extended bBm the position term is
    /// `φ(j+1, k+1, 1) = [a^{2H}+b^{2H}]^K − [a^{2H}+(b−1)^{2H}]^K − [(a−1)^{2H}+b^{2H}]^K + [(a−1)^{2H}+(b−1)^{2H}]^K`
    /// with `a = j+1`, `b = k+1`, and the distance term is
    /// `ψ(j−k, 1) = |j−k+1|^{2HK} − 2|j−k|^{2HK} + |j−k−1|^{2HK}`; together
    /// `βₙ(j, k) = 2^{−K} n^{−2HK} (φ + ψ)`.
    ///
    /// For sfBm the position term is
    /// `ω(j, k, 1) = −(j+k+2)^h + 2(j+k+1)^h − (j+k)^h` and
    /// `βₙ(j, k) = ½ n^{−h} (ω + ψ)` with `ψ` taken at exponent `h`.
    ///
    /// The identity holds for every `j, k ≥ 0`; the bBm literature treats the
    /// `j = 0` and `k = 0` rows separately, which callers may do themselves.
    pub fn psi_phi_decomposition(&self, j: usize, k: usize) -> Result<IncrementSplit> {
        let (jf, kf) = (j as f64, k as f64);
        match *self {
            CovarianceKernel::Fbm { .. } => Err(Error::UnsupportedFamily {
                operation: "psi_phi_decomposition",
                family: Family::Fbm.name(),
            }),
            CovarianceKernel::Bbm { hurst, k: kk } | CovarianceKernel::ExtBbm { hurst, k: kk } => {
                let e = 2.0 * hurst;
                let (a, b) = (jf + 1.0, kf + 1.0);
                let g = |x: f64, y: f64| (x.powf(e) + y.powf(e)).powf(kk);
                let position = g(a, b) - g(a, b - 1.0) - g(a - 1.0, b) + g(a - 1.0, b - 1.0);
                Ok(IncrementSplit {
                    position,
                    distance: second_difference(jf - kf, e * kk),
                    prefactor: 2f64.powf(-kk),
                    exponent: e * kk,
                })
            }
            CovarianceKernel::Sfbm { h } => {
                let sum = jf + kf;
                let position = -(sum + 2.0).powf(h) + 2.0 * (sum + 1.0).powf(h) - sum.powf(h);
                Ok(IncrementSplit {
                    position,
                    distance: second_difference(jf - kf, h),
                    prefactor: 0.5,
                    exponent: h,
                })
            }
        }
    }
}

impl fmt::Display for CovarianceKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CovarianceKernel::Fbm { hurst } => write!(f, "fbm(H={hurst})"),
            CovarianceKernel::Bbm { hurst, k } => write!(f, "bbm(H={hurst}, K={k})"),
            CovarianceKernel::ExtBbm { hurst, k } => write!(f, "ext_bbm(H={hurst}, K={k})"),
            CovarianceKernel::Sfbm { h } => write!(f, "sfbm(h={h})"),
        }
    }
}

/// Position/distance split of a unit-mesh increment covariance, see
/// [`CovarianceKernel::psi_phi_decomposition`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IncrementSplit {
    /// `φ` for the bifractional families, `ω` for sfBm.
    pub position: f64,
    /// `ψ`, the stationary part.
    pub distance: f64,
    /// `2^{−K}` (bBm) or `½` (sfBm).
    pub prefactor: f64,
    /// Scaling exponent: `2HK` or `h`.
    pub exponent: f64,
}

impl IncrementSplit {
    /// Reassembles `βₙ(j, k)` on a grid with mesh `1/n`.
    pub fn beta(&self, n: usize) -> f64 {
        self.prefactor * (self.position + self.distance) * (n as f64).powf(-self.exponent)
    }
}

/// `|x|^e` with `0^e = 0` (all exponents used here are positive).
#[inline]
pub(crate) fn abs_pow(x: f64, e: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        0.0
    } else {
        a.powf(e)
    }
}

/// `|d+1|^e − 2|d|^e + |d−1|^e`.
#[inline]
pub(crate) fn second_difference(d: f64, e: f64) -> f64 {
    abs_pow(d + 1.0, e) - 2.0 * abs_pow(d, e) + abs_pow(d - 1.0, e)
}

/// Uniform partition of `[0, T]` with mesh `1/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    n: usize,
    horizon: f64,
    m: usize,
}

impl GridSpec {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        let m = floor_index(n, horizon);
        if m == 0 {
            return Err(Error::Domain(format!("grid n={n}, T={horizon} has no increments")));
        }
        Ok(GridSpec { n, horizon, m })
    }

    /// Subdivisions per unit time.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of increments, `⌊nT⌋`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Grid time `j/n`.
    pub fn time(&self, j: usize) -> f64 {
        j as f64 / self.n as f64
    }

    /// `⌊nt⌋`, or a domain error if `t` is negative or past the last grid point.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("time must be non-negative, got {t}")));
        }
        let idx = floor_index(self.n, t);
        if idx > self.m {
            return Err(Error::Domain(format!(
                "time {t} is beyond the grid horizon {} (n={})",
                self.horizon, self.n
            )));
        }
        Ok(idx)
    }
}

/// `⌊n·t⌋` with a relative guard so that, e.g., `n = 100, t = 0.29` gives 29.
pub fn floor_index(n: usize, t: f64) -> usize {
    let x = n as f64 * t;
    (x + 1e-9 * x.max(1.0)).floor().max(0.0) as usize
}
