//! Sample summaries and two-sample comparisons for the Monte Carlo harness.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Sorted sample with its first four moments.
///
/// `var` is the unbiased estimator `Σ(x−x̄)²/(n−1)`; `skew` is
/// `g₁ = m₃/m₂^{3/2}` and `ex_kurtosis` is `g₂ = m₄/m₂² − 3`, with `m_k` the
/// central sample moments `Σ(x−x̄)^k/n`. Skewness and kurtosis are NaN for a
/// constant sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    #[serde(skip)]
    pub sorted_values: Vec<f64>,
    pub n: usize,
    pub mean: f64,
    pub var: f64,
    pub skew: f64,
    pub ex_kurtosis: f64,
}

impl EmpiricalDistribution {
    pub fn std_error_of_mean(&self) -> f64 {
        (self.var / self.n as f64).sqrt()
    }

    /// Standard error of the sample variance under a Gaussian-like tail,
    /// `var·sqrt((2 + κ·(n−1)/n)/(n−1))` with `κ` the excess kurtosis.
    pub fn std_error_of_var(&self) -> f64 {
        let n = self.n as f64;
        let kurt = if self.ex_kurtosis.is_finite() { self.ex_kurtosis } else { 0.0 };
        self.var * ((2.0 + kurt * (n - 1.0) / n).max(0.0) / (n - 1.0)).sqrt()
    }
}

/// Moment summary of `values` (at least two finite entries).
pub fn moments(values: &[f64]) -> Result<EmpiricalDistribution> {
    if values.len() < 2 {
        return Err(Error::Domain(format!("need at least 2 values, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("sample contains non-finite values".into()));
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let m2 = compensated_sum(values.iter().map(|x| (x - mean).powi(2))) / n;
    let m3 = compensated_sum(values.iter().map(|x| (x - mean).powi(3))) / n;
    let m4 = compensated_sum(values.iter().map(|x| (x - mean).powi(4))) / n;
    let (skew, ex_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (f64::NAN, f64::NAN)
    };
    let mut sorted_values = values.to_vec();
    sorted_values.sort_by(f64::total_cmp);
    Ok(EmpiricalDistribution {
        sorted_values,
        n: values.len(),
        mean,
        var: m2 * n / (n - 1.0),
        skew,
        ex_kurtosis,
    })
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
    pub n_eff: f64,
}

/// `D = sup_x |F_a(x) − F_b(x)|` over the pooled sample, both empirical CDFs
/// right-continuous so ties are stepped together. The p-value uses the
/// asymptotic Kolmogorov law at `√n_eff · D`, `n_eff = n_a n_b/(n_a + n_b)`.
pub fn ks_two_sample(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<KsResult> {
    let (xa, xb) = (&a.sorted_values, &b.sorted_values);
    if xa.is_empty() || xb.is_empty() {
        return Err(Error::Domain("KS test needs two nonempty samples".into()));
    }
    let d = ks_statistic(xa, xb);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let n_eff = na * nb / (na + nb);
    Ok(KsResult {
        d,
        p: kolmogorov_survival(n_eff.sqrt() * d),
        n_eff,
    })
}

/// KS distance between two ascending samples.
pub fn ks_statistic(xa: &[f64], xb: &[f64]) -> f64 {
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// `P(K > λ)` for the Kolmogorov distribution,
/// `2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // The alternating series converges slowly here; the CDF is < 1e-9.
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Domain(format!("length mismatch {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Domain("correlation needs at least 3 pairs".into()));
    }
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxx = compensated_sum(x.iter().map(|a| (a - mx).powi(2)));
    let syy = compensated_sum(y.iter().map(|b| (b - my).powi(2)));
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("an input is constant".into()));
    }
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Domain("slope fit needs at least two matching points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn moment_examples() {
        let c = moments(&[3.0; 10]).unwrap();
        assert_eq!(c.var, 0.0);
        assert!(c.skew.is_nan());
        let pm = moments(&[-1.0, 1.0]).unwrap();
        assert_eq!(pm.mean, 0.0);
        assert_eq!(pm.var, 2.0);
        assert!(moments(&[1.0]).is_err());
        assert!(moments(&[1.0, f64::NAN]).is_err());

        let big = moments(&normals(1, 1_000_000)).unwrap();
        assert!((big.var - 1.0).abs() < 0.005);
        assert!(big.skew.abs() < 0.01);
        assert!(big.ex_kurtosis.abs() < 0.02);
    }

    #[test]
    fn ks_examples() {
        let a = moments(&normals(2, 500)).unwrap();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.d, 0.0);
        assert_eq!(r.p, 1.0);

        let zero = EmpiricalDistribution {
            sorted_values: vec![0.0],
            n: 1,
            mean: 0.0,
            var: 0.0,
            skew: f64::NAN,
            ex_kurtosis: f64::NAN,
        };
        let one = EmpiricalDistribution {
            sorted_values: vec![1.0],
            ..zero.clone()
        };
        assert_eq!(ks_two_sample(&zero, &one).unwrap().d, 1.0);
        let empty = EmpiricalDistribution {
            sorted_values: vec![],
            ..zero.clone()
        };
        assert!(ks_two_sample(&zero, &empty).is_err());
    }

    #[test]
    fn ks_ties_step_together() {
        assert_eq!(ks_statistic(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]), 1.0 / 3.0);
        assert_eq!(ks_statistic(&[0.0, 0.0], &[0.0]), 0.0);
    }

    #[test]
    fn ks_null_frequency() {
        let mut below = 0;
        for s in 0..100u64 {
            let a = moments(&normals(1000 + 2 * s, 10_000)).unwrap();
            let b = moments(&normals(1001 + 2 * s, 10_000)).unwrap();
            if ks_two_sample(&a, &b).unwrap().d < 0.03 {
                below += 1;
            }
        }
        assert!(below >= 90, "{below}/100 below 0.03");
    }

    #[test]
    fn kolmogorov_quantiles() {
        assert_relative_eq!(kolmogorov_survival(1.358), 0.05, epsilon = 1e-3);
        assert_relative_eq!(kolmogorov_survival(1.628), 0.01, epsilon = 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }

    #[test]
    fn correlation_examples() {
        let x = normals(3, 100);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v).collect();
        assert_relative_eq!(correlation(&x, &x).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(correlation(&x, &y).unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(
            correlation(&x, &vec![1.0; 100]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(correlation(&x[..2], &y[..2]).is_err());

        let mut small = 0;
        for s in 0..100u64 {
            let r = correlation(&normals(5000 + 2 * s, 10_000), &normals(5001 + 2 * s, 10_000)).unwrap();
            if r.abs() < 0.03 {
                small += 1;
            }
        }
        assert!(small >= 97, "{small}/100");
    }

    #[test]
    fn slope_fit() {
        let x = [64.0, 128.0, 256.0, 512.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.0 / 3.0)).collect();
        assert_relative_eq!(log_log_slope(&x, &y).unwrap(), -1.0 / 3.0, epsilon = 1e-12);
        assert!(log_log_slope(&x, &[1.0, 0.0, 1.0, 1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ks_symmetric_and_monotone_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 2..60),
            b in proptest::collection::vec(-5.0f64..5.0, 2..60),
        ) {
            let da = moments(&a).unwrap();
            let db = moments(&b).unwrap();
            let d1 = ks_two_sample(&da, &db).unwrap().d;
            let d2 = ks_two_sample(&db, &da).unwrap().d;
            prop_assert_eq!(d1, d2);
            let map = |v: &f64| v.exp() * 2.0 + 1.0;
            let ma = moments(&a.iter().map(map).collect::<Vec<_>>()).unwrap();
            let mb = moments(&b.iter().map(map).collect::<Vec<_>>()).unwrap();
            prop_assert!((ks_two_sample(&ma, &mb).unwrap().d - d1).abs() < 1e-12);
        }

        #[test]
        fn correlation_affine(
            pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 5..50),
            scale in 0.1f64..10.0,
            shift in -10.0f64..10.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(r) = correlation(&x, &y) {
                let xs: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
                let r2 = correlation(&xs, &y).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
                let xn: Vec<f64> = x.iter().map(|v| -scale * v).collect();
                prop_assert!((correlation(&xn, &y).unwrap() + r).abs() < 1e-9);
            }
        }
    }
}
