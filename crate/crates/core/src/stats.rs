//! Small statistics helpers: moments, exponential fits and the one-sample
//! Kolmogorov-Smirnov test.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sample mean and unbiased standard deviation (`0` for one sample).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let (m, s) = mean_std(xs);
    (m, s / (xs.len() as f64).sqrt())
}

/// Ratio-of-means estimate `Σy/Σx` with its delta-method standard error.
pub fn ratio_se(num: &[f64], den: &[f64]) -> (f64, f64) {
    assert_eq!(num.len(), den.len());
    let n = num.len() as f64;
    let my = num.iter().sum::<f64>() / n;
    let mx = den.iter().sum::<f64>() / n;
    let r = my / mx;
    if num.len() < 2 {
        return (r, 0.0);
    }
    let resid: Vec<f64> = num.iter().zip(den).map(|(y, x)| y - r * x).collect();
    let (_, s) = mean_std(&resid);
    (r, s / (n.sqrt() * mx.abs()))
}

/// Pearson correlation of two equally long samples.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mx, _) = mean_std(x);
    let (my, _) = mean_std(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // The alternating series converges slowly here; Q is 1 to 1e-15.
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

impl KsResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// One-sample KS test of `samples` against the CDF `cdf`, with the
/// Stephens small-sample correction on the asymptotic p-value.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("non-finite sample"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    let p = kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult { statistic: d, p_value: p, n })
}

/// KS test against `Exp(mean)`.
pub fn ks_exponential(samples: &[f64], mean: f64) -> Result<KsResult> {
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::param("exponential mean must be positive"));
    }
    ks_test(samples, |x| if x <= 0.0 { 0.0 } else { -(-x / mean).exp_m1() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    /// Maximum-likelihood mean (the sample mean).
    pub mean: f64,
    pub rate: f64,
    /// Standard error of `mean` under the fitted law, `mean/√n`.
    pub mean_se: f64,
    pub n: usize,
}

pub fn fit_exponential(samples: &[f64]) -> Result<ExponentialFit> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if !(mean.is_finite() && mean > 0.0) {
        return Err(Error::param("exponential fit needs a positive sample mean"));
    }
    Ok(ExponentialFit { mean, rate: 1.0 / mean, mean_se: mean / (n as f64).sqrt(), n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over `[min, max]`.
pub fn histogram(samples: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if samples.is_empty() || !(hi > lo) {
        let c = if samples.is_empty() { 0 } else { samples.len() };
        let (lo, hi) = if samples.is_empty() { (0.0, 1.0) } else { (lo, lo + 1.0) };
        let mut counts = vec![0; bins];
        counts[0] = c;
        let w = (hi - lo) / bins as f64;
        return Histogram { edges: (0..=bins).map(|i| lo + i as f64 * w).collect(), counts };
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0; bins];
    for &x in samples {
        let k = (((x - lo) / w) as usize).min(bins - 1);
        counts[k] += 1;
    }
    Histogram { edges: (0..=bins).map(|i| lo + i as f64 * w).collect(), counts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, Uniform};

    #[test]
    fn kolmogorov_tail_values() {
        // Classic critical values of the limiting distribution.
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 2e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(1.2238) - 0.10).abs() < 2e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
        assert!(kolmogorov_sf(5.0) < 1e-20);
    }

    #[test]
    fn uniform_samples_pass_and_shifted_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Uniform::new(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..2000).map(|_| u.sample(&mut rng)).collect();
        let ok = ks_test(&xs, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(!ok.rejects(0.01), "{ok:?}");
        let bad = ks_test(&xs, |x| (x - 0.1).clamp(0.0, 1.0)).unwrap();
        assert!(bad.rejects(0.01));
    }

    #[test]
    fn exponential_fit_recovers_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let e = Exp::new(1.0 / 3.5).unwrap();
        let xs: Vec<f64> = (0..10_000).map(|_| e.sample(&mut rng)).collect();
        let fit = fit_exponential(&xs).unwrap();
        assert!((fit.mean - 3.5).abs() / 3.5 < 0.05);
        assert!(!ks_exponential(&xs, fit.mean).unwrap().rejects(0.01));
    }

    #[test]
    fn constant_samples_are_not_exponential() {
        let xs = vec![2.0; 200];
        assert!(ks_exponential(&xs, 2.0).unwrap().rejects(0.01));
    }

    #[test]
    fn pearson_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]) - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[1.0, -1.0, -1.0, 1.0])).abs() < 1e-15);
        assert!((pearson(&x, &[-1.0, -2.0, -3.0, -4.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn ratio_estimate_matches_direct_ratio() {
        let y = [1.0, 2.0, 3.0, 4.0];
        let x = [2.0, 4.0, 6.0, 8.1];
        let (r, se) = ratio_se(&y, &x);
        assert!((r - 10.0 / 20.1).abs() < 1e-15);
        assert!(se > 0.0 && se < 0.01);
    }

    #[test]
    fn histogram_counts_everything() {
        let xs = [0.0, 0.1, 0.5, 0.99, 1.0];
        let h = histogram(&xs, 4);
        assert_eq!(h.counts.iter().sum::<usize>(), 5);
        assert_eq!(h.counts, vec![2, 0, 1, 2]);
    }
}
