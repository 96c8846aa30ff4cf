//! Path functionals built on grid increments: the trapezoidal (Stratonovich)
//! Riemann sum, its third and fifth order Taylor terms, the weighted
//! increment term `Yₙ`, and plain cubic variation.
//!
//! Expanding `f(X_{j+1}) − f(X_j)` and the trapezoid term
//! `½ [f′(X_j) + f′(X_{j+1})] ΔX_j` around the midpoint `X̂_j` gives
//!
//! ```text
//! Δf_j − trap_j = −(1/12) f‴(X̂_j) ΔX_j³ − (1/480) f⁽⁵⁾(X̂_j) ΔX_j⁵ + O(ΔX_j⁷)
//! ```
//!
//! so that, summed over `j < ⌊nt⌋`,
//! `f(X_{⌊nt⌋/n}) − f(X_0) = Φₙ(t) − (1/12)·third_order_sum − (1/480)·fifth_order_sum + remainder`.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernels::CovarianceKernel;
use crate::numeric::CompensatedSum;
use crate::sampler::SamplePath;

/// Coefficient of `f⁽⁵⁾(X̂) ΔX⁵` in `Δf − trap`.
pub const FIFTH_ORDER_COEFF: f64 = -1.0 / 480.0;
/// Coefficient of `f‴(X̂) ΔX³` in `Δf − trap`.
pub const THIRD_ORDER_COEFF: f64 = -1.0 / 12.0;

/// Real polynomial, `coeffs[i]` multiplying `x^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| i as f64 * c)
                .collect(),
        )
    }

    /// Largest `|p(x)|` over `[lo, hi]`, from the endpoints and the real
    /// critical points located by bisection on sign changes of `p′` over a
    /// fine partition.
    pub fn max_abs_on(&self, lo: f64, hi: f64) -> f64 {
        let mut best = self.eval(lo).abs().max(self.eval(hi).abs());
        if self.degree() < 2 || hi <= lo {
            return best;
        }
        let d = self.derivative();
        let steps = 64 * self.degree();
        let h = (hi - lo) / steps as f64;
        let mut a = lo;
        let mut da = d.eval(a);
        for i in 1..=steps {
            let b = if i == steps { hi } else { lo + i as f64 * h };
            let db = d.eval(b);
            best = best.max(self.eval(b).abs());
            if da.signum() != db.signum() {
                let (mut x0, mut x1, mut f0) = (a, b, da);
                for _ in 0..60 {
                    let mid = 0.5 * (x0 + x1);
                    let fm = d.eval(mid);
                    if fm.signum() == f0.signum() {
                        x0 = mid;
                        f0 = fm;
                    } else {
                        x1 = mid;
                    }
                }
                best = best.max(self.eval(0.5 * (x0 + x1)).abs());
            }
            a = b;
            da = db;
        }
        best
    }
}

/// Smooth test function `f` with exact derivative evaluators. Restricted to
/// polynomials, which have derivatives of all orders and polynomial growth.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    label: String,
    derivs: Vec<Polynomial>,
}

impl TestFunction {
    /// Highest derivative order kept precomputed.
    const ORDERS: usize = 7;

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let p = Polynomial::new(coeffs);
        let label = format!(
            "poly:{}",
            p.coeffs().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        );
        Self::with_label(p, label)
    }

    fn with_label(p: Polynomial, label: String) -> Self {
        let mut derivs = vec![p];
        for _ in 0..Self::ORDERS {
            let next = derivs.last().unwrap().derivative();
            derivs.push(next);
        }
        TestFunction { label, derivs }
    }

    /// `x^k / c`.
    pub fn monomial(power: usize, divisor: f64) -> Self {
        let mut coeffs = vec![0.0; power + 1];
        coeffs[power] = 1.0 / divisor;
        let label = if divisor == 1.0 {
            format!("x{power}")
        } else {
            format!("x{power}/{divisor}")
        };
        Self::with_label(Polynomial::new(coeffs), label)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn polynomial_ref(&self) -> &Polynomial {
        &self.derivs[0]
    }

    pub fn degree(&self) -> usize {
        self.derivs[0].degree()
    }

    /// `f^{(order)}(x)`; orders above 7 are derived on the fly.
    #[inline]
    pub fn deriv(&self, order: usize, x: f64) -> f64 {
        match self.derivs.get(order) {
            Some(p) => p.eval(x),
            None => {
                let mut p = self.derivs[Self::ORDERS].clone();
                for _ in Self::ORDERS..order {
                    p = p.derivative();
                }
                p.eval(x)
            }
        }
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        self.derivs[0].eval(x)
    }

    #[inline]
    pub fn f1(&self, x: f64) -> f64 {
        self.derivs[1].eval(x)
    }

    #[inline]
    pub fn f3(&self, x: f64) -> f64 {
        self.derivs[3].eval(x)
    }

    #[inline]
    pub fn f5(&self, x: f64) -> f64 {
        self.derivs[5].eval(x)
    }

    /// True when `f‴ ≡ 0`.
    pub fn third_derivative_vanishes(&self) -> bool {
        self.derivs[3].is_zero()
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// Accepts `x`, `xK` (e.g. `x3`), `xK/D` (e.g. `x2/2`) and
    /// `poly:c0,c1,…`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Domain(format!("cannot parse test function `{s}`"));
        if let Some(list) = s.strip_prefix("poly:") {
            let coeffs = list
                .split(',')
                .map(|c| c.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<Vec<_>>>()?;
            if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                return Err(bad());
            }
            return Ok(TestFunction::polynomial(coeffs));
        }
        let rest = s.strip_prefix('x').ok_or_else(bad)?;
        let (power, divisor) = match rest.split_once('/') {
            Some((p, d)) => (p, d.parse::<f64>().map_err(|_| bad())?),
            None => (rest, 1.0),
        };
        let power = if power.is_empty() {
            1
        } else {
            power.trim_start_matches('^').parse::<usize>().map_err(|_| bad())?
        };
        if !(divisor.is_finite() && divisor != 0.0) || power > 32 {
            return Err(bad());
        }
        Ok(TestFunction::monomial(power, divisor))
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl Serialize for TestFunction {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label)
    }
}

/// `(X_j, X_{j+1})` pairs for `j < ⌊nt⌋`.
fn steps(path: &SamplePath, t: f64) -> Result<impl Iterator<Item = (f64, f64)> + '_> {
    let end = path.grid.index_of(t)?;
    Ok(path.values[..=end].windows(2).map(|w| (w[0], w[1])))
}

/// Trapezoidal Riemann sum
/// `Φₙ(t) = ½ Σ_{j<⌊nt⌋} [f′(X_{j/n}) + f′(X_{(j+1)/n})] ΔX_{j/n}`.
pub fn phi_n(path: &SamplePath, f: &TestFunction, t: f64) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for (a, b) in steps(path, t)? {
        acc.add(0.5 * (f.f1(a) + f.f1(b)) * (b - a));
    }
    Ok(acc.value())
}

/// `Σ_j f‴(X̂_j) ΔX_j³` with `X̂_j` the increment midpoint. The expansion
/// coefficient `−1/12` is left to callers.
pub fn third_order_sum(path: &SamplePath, f: &TestFunction, t: f64) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for (a, b) in steps(path, t)? {
        let d = b - a;
        acc.add(f.f3(0.5 * (a + b)) * d * d * d);
    }
    Ok(acc.value())
}

/// `Σ_j f⁽⁵⁾(X̂_j) ΔX_j⁵`.
pub fn fifth_order_sum(path: &SamplePath, f: &TestFunction, t: f64) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for (a, b) in steps(path, t)? {
        let d = b - a;
        let d2 = d * d;
        acc.add(f.f5(0.5 * (a + b)) * d2 * d2 * d);
    }
    Ok(acc.value())
}

/// `Yₙ(t) = Σ_j ‖ΔX_j‖²_{L²} f‴(X̂_j) ΔX_j`, with the `L²` norms
/// `βₙ(j, j)` taken from the kernel rather than the sample.
pub fn y_n_term(kernel: &CovarianceKernel, path: &SamplePath, f: &TestFunction, t: f64) -> Result<f64> {
    let n = path.grid.n() as f64;
    let mut acc = CompensatedSum::new();
    for (j, (a, b)) in steps(path, t)?.enumerate() {
        let jf = j as f64;
        let weight = kernel.beta_unchecked(n, jf, jf);
        acc.add(weight * f.f3(0.5 * (a + b)) * (b - a));
    }
    Ok(acc.value())
}

/// Cubic variation `Σ_j ΔX_j³`.
pub fn cubic_variation(path: &SamplePath, t: f64) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for (a, b) in steps(path, t)? {
        let d = b - a;
        acc.add(d * d * d);
    }
    Ok(acc.value())
}

/// Per-step residual
/// `Δf_j − trap_j − (−1/12) f‴(X̂_j) ΔX_j³ − (−1/480) f⁽⁵⁾(X̂_j) ΔX_j⁵`,
/// the part of the expansion of order seven and higher.
#[inline]
pub fn step_remainder(f: &TestFunction, a: f64, b: f64) -> f64 {
    let d = b - a;
    let mid = 0.5 * (a + b);
    let d2 = d * d;
    let delta_f = f.f(b) - f.f(a);
    let trap = 0.5 * (f.f1(a) + f.f1(b)) * d;
    delta_f - trap - THIRD_ORDER_COEFF * f.f3(mid) * d2 * d - FIFTH_ORDER_COEFF * f.f5(mid) * d2 * d2 * d
}

/// Sum of [`step_remainder`] over `j < ⌊nt⌋`.
pub fn taylor_remainder_sum(path: &SamplePath, f: &TestFunction, t: f64) -> Result<f64> {
    let mut acc = CompensatedSum::new();
    for (a, b) in steps(path, t)? {
        acc.add(step_remainder(f, a, b));
    }
    Ok(acc.value())
}

/// Pathwise bound `max|f⁽⁷⁾| · |ΔX_j|⁷ / (7! · 2⁶)` on the midpoint Taylor
/// remainder of `f(X_{j+1}) − f(X_j)` through order six. The maximum is taken
/// over the range visited by the path up to `⌊nt⌋`.
pub fn seventh_order_bound_constant(path: &SamplePath, f: &TestFunction, t: f64) -> Result<f64> {
    let end = path.grid.index_of(t)?;
    let vals = &path.values[..=end];
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p7 = f.polynomial_ref().clone();
    for _ in 0..7 {
        p7 = p7.derivative();
    }
    Ok(p7.max_abs_on(lo, hi) / (5040.0 * 64.0))
}

/// Midpoint expansion of `f(b) − f(a)` through order six:
/// `2 Σ_{k odd ≤ 5} f^{(k)}(X̂) (ΔX/2)^k / k!`.
pub fn midpoint_expansion(f: &TestFunction, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut total = 0.0;
    let mut fact = 1.0;
    for k in 1..=6usize {
        fact *= k as f64;
        if k % 2 == 1 {
            total += 2.0 * f.deriv(k, mid) * h.powi(k as i32) / fact;
        }
    }
    total
}
