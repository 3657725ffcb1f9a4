//! Statistical test helpers used by the verification suites: one-sample
//! Kolmogorov–Smirnov against a reference CDF and Pearson chi-squared
//! goodness of fit.

use statrs::distribution::{ContinuousCDF, Normal};

/// One-sample KS statistic of `xs` against the CDF `f`.
pub fn ks_statistic<F: Fn(f64) -> f64>(xs: &[f64], f: F) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let c = f(x);
        d = d.max((i as f64 + 1.0) / n - c).max(c - i as f64 / n);
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} exp(-2 k² λ²)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..101 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        if term < 1e-16 {
            break;
        }
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS statistic for `n` samples.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let n = n as f64;
    // Stephens' small-sample correction
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    kolmogorov_survival(lambda)
}

/// KS test against an arbitrary CDF: returns `(statistic, pass)` at `level`.
pub fn ks_test<F: Fn(f64) -> f64>(xs: &[f64], cdf: F, level: f64) -> (f64, bool) {
    let d = ks_statistic(xs, cdf);
    (d, ks_p_value(d, xs.len()) > level)
}

/// KS test against `Exp(rate)`.
pub fn ks_test_exponential(xs: &[f64], rate: f64, level: f64) -> (f64, bool) {
    ks_test(xs, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-rate * x).exp() }, level)
}

/// KS test against `N(mean, sd²)`.
pub fn ks_test_normal(xs: &[f64], mean: f64, sd: f64, level: f64) -> (f64, bool) {
    let normal = Normal::new(mean, sd).expect("valid normal");
    ks_test(xs, |x| normal.cdf(x), level)
}

/// Standard normal CDF.
pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Pearson chi-squared statistic and p-value for observed counts against
/// expected counts. Bins with small expectation are pooled into the last bin
/// until every expectation is at least `min_expected`.
pub fn chi_squared_gof(observed: &[f64], expected: &[f64], min_expected: f64) -> (f64, f64) {
    assert_eq!(observed.len(), expected.len());
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let mut pool_o = 0.0;
    let mut pool_e = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e >= min_expected {
            obs.push(o);
            exp.push(e);
        } else {
            pool_o += o;
            pool_e += e;
        }
    }
    if pool_e > 0.0 {
        obs.push(pool_o);
        exp.push(pool_e);
    }
    let k = obs.len();
    if k < 2 {
        return (0.0, 1.0);
    }
    let stat: f64 = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| (o - e) * (o - e) / e)
        .sum();
    let df = (k - 1) as f64;
    let p = chi_squared_survival(stat, df);
    (stat, p)
}

/// Two-sample chi-squared homogeneity test on count histograms.
pub fn chi_squared_two_sample(a: &[f64], b: &[f64], min_expected: f64) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let na: f64 = a.iter().sum();
    let nb: f64 = b.iter().sum();
    // pool sparse bins first, based on combined counts
    let mut bins_a = Vec::new();
    let mut bins_b = Vec::new();
    let (mut pa, mut pb) = (0.0, 0.0);
    for (&oa, &ob) in a.iter().zip(b) {
        let expect_a = na * (oa + ob) / (na + nb);
        let expect_b = nb * (oa + ob) / (na + nb);
        if expect_a >= min_expected && expect_b >= min_expected {
            bins_a.push(oa);
            bins_b.push(ob);
        } else {
            pa += oa;
            pb += ob;
        }
    }
    if pa + pb > 0.0 {
        bins_a.push(pa);
        bins_b.push(pb);
    }
    let k = bins_a.len();
    if k < 2 {
        return (0.0, 1.0);
    }
    let mut stat = 0.0;
    for (&oa, &ob) in bins_a.iter().zip(&bins_b) {
        let tot = oa + ob;
        let ea = na * tot / (na + nb);
        let eb = nb * tot / (na + nb);
        stat += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
    }
    let df = (k - 1) as f64;
    (stat, chi_squared_survival(stat, df))
}

/// Survival function of the chi-squared distribution with `df` degrees of
/// freedom.
pub fn chi_squared_survival(stat: f64, df: f64) -> f64 {
    use statrs::function::gamma::gamma_lr;
    if stat <= 0.0 {
        return 1.0;
    }
    1.0 - gamma_lr(df / 2.0, stat / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;
    use approx::assert_relative_eq;

    #[test]
    fn kolmogorov_known_quantile() {
        // Q(1.3581) ≈ 0.05, Q(1.6276) ≈ 0.01
        assert_relative_eq!(kolmogorov_survival(1.3581), 0.05, max_relative = 1e-3);
        assert_relative_eq!(kolmogorov_survival(1.6276), 0.01, max_relative = 1e-2);
    }

    #[test]
    fn ks_accepts_true_distribution() {
        let mut rng = RngStream::new(101, 0);
        let xs: Vec<f64> = (0..5000).map(|_| rng.standard_normal()).collect();
        let (_, pass) = ks_test_normal(&xs, 0.0, 1.0, 0.01);
        assert!(pass);
    }

    #[test]
    fn ks_rejects_wrong_distribution() {
        let mut rng = RngStream::new(102, 0);
        let xs: Vec<f64> = (0..5000).map(|_| rng.standard_normal() + 0.2).collect();
        let (_, pass) = ks_test_normal(&xs, 0.0, 1.0, 0.01);
        assert!(!pass);
    }

    #[test]
    fn chi_squared_uniform_counts() {
        let obs = vec![100.0, 98.0, 105.0, 97.0];
        let exp = vec![100.0; 4];
        let (_, p) = chi_squared_gof(&obs, &exp, 5.0);
        assert!(p > 0.5);
        let bad = vec![150.0, 50.0, 120.0, 80.0];
        let (_, p_bad) = chi_squared_gof(&bad, &exp, 5.0);
        assert!(p_bad < 1e-6);
    }
}
