//! Test statistics: Kolmogorov-Smirnov (one/two-sample, weighted), chi-square,
//! dispersion, sign test, correlation and standard errors.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// Minimum sample size accepted by the goodness-of-fit tests.
pub const MIN_SAMPLES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Sample size entering the asymptotic law (effective size for weighted tests).
    pub n_eff: f64,
}

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanSe { mean: f64::NAN, se: f64::NAN, n };
        }
        let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        if n == 1 {
            return MeanSe { mean, se: f64::INFINITY, n };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).collect::<CompensatedSum>().value() / (n - 1) as f64;
        MeanSe { mean, se: (var / n as f64).sqrt(), n }
    }

    /// `(mean - target) / se`.
    pub fn z_against(&self, target: f64) -> f64 {
        (self.mean - target) / self.se
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// z-score of the difference of two independent estimates.
pub fn z_difference(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    (a - b) / (se_a * se_a + se_b * se_b).sqrt()
}

/// Two-sided normal p-value for a z-score.
pub fn z_p_value(z: f64) -> f64 {
    2.0 * normal_cdf(-z.abs())
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Dual series, accurate for small arguments.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=50).map(|j| (-((2 * j - 1) as f64).powi(2) * c).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        s += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a KS distance with Stephens' finite-size correction.
pub fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sn = n_eff.sqrt();
    kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d)
}

fn check_samples(xs: &[f64], what: &str) -> Result<()> {
    if xs.len() < MIN_SAMPLES {
        return Err(Error::Degenerate(format!("{what}: {} samples, need at least {MIN_SAMPLES}", xs.len())));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Degenerate(format!("{what}: NaN sample")));
    }
    Ok(())
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    check_samples(xs, "ks_one_sample")?;
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(TestResult { statistic: d, p_value: ks_p_value(d, n), n_eff: n })
}

/// Weighted one-sample KS; the asymptotic law uses the Kish effective size.
pub fn weighted_ks_one_sample(xs: &[f64], weights: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    check_samples(xs, "weighted_ks_one_sample")?;
    let (order, total, ess) = weighted_order(xs, weights)?;
    let mut d: f64 = 0.0;
    let mut acc = 0.0;
    for &i in &order {
        let f = cdf(xs[i]);
        d = d.max(f - acc / total);
        acc += weights[i];
        d = d.max(acc / total - f);
    }
    Ok(TestResult { statistic: d, p_value: ks_p_value(d, ess), n_eff: ess })
}

fn weighted_order(xs: &[f64], weights: &[f64]) -> Result<(Vec<usize>, f64, f64)> {
    if xs.len() != weights.len() {
        return Err(Error::Degenerate("sample and weight lengths differ".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Degenerate("weights must be finite and nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    Ok((order, total, effective_sample_size(weights)))
}

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    weighted_ks_two_sample(a, &vec![1.0; a.len()], b, &vec![1.0; b.len()])
}

/// Two-sample KS with importance weights on either side.
pub fn weighted_ks_two_sample(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> Result<TestResult> {
    check_samples(a, "ks_two_sample (first)")?;
    check_samples(b, "ks_two_sample (second)")?;
    let (oa, ta, na) = weighted_order(a, wa)?;
    let (ob, tb, nb) = weighted_order(b, wb)?;
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < oa.len() || j < ob.len() {
        let x = match (oa.get(i), ob.get(j)) {
            (Some(&p), Some(&q)) => a[p].min(b[q]),
            (Some(&p), None) => a[p],
            (None, Some(&q)) => b[q],
            (None, None) => unreachable!(),
        };
        while i < oa.len() && a[oa[i]] <= x {
            fa += wa[oa[i]];
            i += 1;
        }
        while j < ob.len() && b[ob[j]] <= x {
            fb += wb[ob[j]];
            j += 1;
        }
        d = d.max((fa / ta - fb / tb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(TestResult { statistic: d, p_value: ks_p_value(d, n_eff), n_eff })
}

/// Pearson chi-square goodness of fit of observed counts to expected counts.
/// `fitted` is the number of parameters estimated from the data.
pub fn chi_square_gof(observed: &[f64], expected: &[f64], fitted: usize) -> Result<TestResult> {
    if observed.len() != expected.len() || observed.len() < 2 + fitted {
        return Err(Error::Degenerate("chi-square needs matching bins and positive degrees of freedom".into()));
    }
    if expected.iter().any(|&e| e <= 0.0) {
        return Err(Error::Degenerate("expected count must be positive in every bin".into()));
    }
    let stat: f64 = observed.iter().zip(expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (observed.len() - 1 - fitted) as f64;
    let p = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
    let n = observed.iter().sum();
    Ok(TestResult { statistic: stat, p_value: p, n_eff: n })
}

/// Chi-square homogeneity test between two (possibly weighted) histograms of
/// integer-valued samples.
///
/// Each side is summarised by its bin proportions and its effective sample
/// size. Bins are the values `0, 1, ...`, pooled from the top until the pooled
/// expected count on both sides is at least `min_expected`.
pub fn chi_square_two_sample(
    a: &[usize],
    wa: Option<&[f64]>,
    b: &[usize],
    wb: Option<&[f64]>,
    min_expected: f64,
) -> Result<TestResult> {
    let hist = |xs: &[usize], w: Option<&[f64]>| -> Result<(Vec<f64>, f64)> {
        let w: Vec<f64> = match w {
            Some(w) if w.len() == xs.len() => w.to_vec(),
            Some(_) => return Err(Error::Degenerate("weight length mismatch".into())),
            None => vec![1.0; xs.len()],
        };
        let total: f64 = w.iter().sum();
        if xs.is_empty() || total <= 0.0 {
            return Err(Error::Degenerate("empty histogram".into()));
        }
        let max = *xs.iter().max().unwrap();
        let mut h = vec![0.0; max + 1];
        for (&x, &wi) in xs.iter().zip(&w) {
            h[x] += wi / total;
        }
        Ok((h, effective_sample_size(&w)))
    };
    let (mut pa, na) = hist(a, wa)?;
    let (mut pb, nb) = hist(b, wb)?;
    let len = pa.len().max(pb.len());
    pa.resize(len, 0.0);
    pb.resize(len, 0.0);
    // Pool into bins with enough pooled mass on both sides.
    let pooled = |i: usize| (na * pa[i] + nb * pb[i]) / (na + nb);
    let mut bins: Vec<(f64, f64, f64)> = Vec::new();
    let (mut ca, mut cb, mut cp) = (0.0, 0.0, 0.0);
    for i in 0..len {
        ca += pa[i];
        cb += pb[i];
        cp += pooled(i);
        if cp * na.min(nb) >= min_expected {
            bins.push((ca, cb, cp));
            ca = 0.0;
            cb = 0.0;
            cp = 0.0;
        }
    }
    if cp > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += ca;
                last.1 += cb;
                last.2 += cp;
            }
            None => bins.push((ca, cb, cp)),
        }
    }
    if bins.len() < 2 {
        return Err(Error::Degenerate("fewer than two bins after pooling".into()));
    }
    let scale = 1.0 / na + 1.0 / nb;
    let stat: f64 = bins.iter().map(|(x, y, p)| (x - y).powi(2) / (p * scale)).sum();
    let df = (bins.len() - 1) as f64;
    let p = 1.0 - ChiSquared::new(df).unwrap().cdf(stat);
    Ok(TestResult { statistic: stat, p_value: p, n_eff: na * nb / (na + nb) })
}

/// Index of dispersion `var / mean` of counts, with the two-sided p-value of
/// `(n - 1) var / mean` against chi-square with `n - 1` degrees of freedom.
pub fn dispersion_test(counts: &[f64]) -> Result<TestResult> {
    let n = counts.len();
    if n < MIN_SAMPLES {
        return Err(Error::Degenerate(format!("dispersion test needs {MIN_SAMPLES} counts, got {n}")));
    }
    let ms = MeanSe::of(counts);
    if ms.mean <= 0.0 {
        return Err(Error::Degenerate("dispersion test on all-zero counts".into()));
    }
    let var = counts.iter().map(|x| (x - ms.mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let index = var / ms.mean;
    let stat = (n - 1) as f64 * index;
    let cdf = ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
    let p = (2.0 * cdf.min(1.0 - cdf)).min(1.0);
    Ok(TestResult { statistic: index, p_value: p, n_eff: n as f64 })
}

/// One-sided sign test of `H1: P(d > 0) > P(d < 0)`; ties are dropped.
pub fn sign_test(diffs: &[f64]) -> Result<TestResult> {
    let pos = diffs.iter().filter(|&&d| d > 0.0).count() as u64;
    let neg = diffs.iter().filter(|&&d| d < 0.0).count() as u64;
    let n = pos + neg;
    if n == 0 {
        return Err(Error::Degenerate("sign test with all ties".into()));
    }
    let bin = Binomial::new(0.5, n).unwrap();
    let p = if pos == 0 { 1.0 } else { 1.0 - bin.cdf(pos - 1) };
    Ok(TestResult { statistic: pos as f64, p_value: p, n_eff: n as f64 })
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Degenerate("correlation needs two equal-length samples of size >= 3".into()));
    }
    let mx = MeanSe::of(x).mean;
    let my = MeanSe::of(y).mean;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation with a constant sample".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Weighted mean with the delta-method standard error of a self-normalised estimator.
pub fn weighted_mean_se(xs: &[f64], weights: &[f64]) -> MeanSe {
    let w: f64 = weights.iter().sum();
    let mean = xs.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / w;
    let var = xs.iter().zip(weights).map(|(x, wi)| (wi / w).powi(2) * (x - mean).powi(2)).sum::<f64>();
    MeanSe { mean, se: var.sqrt(), n: xs.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamRng};
    use rand::Rng;
    use rand_distr::Poisson;

    #[test]
    fn identical_samples_give_zero_statistic() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let r = ks_two_sample(&xs, &xs).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_series_agree_at_switch() {
        let a = {
            let l: f64 = 1.18;
            let c = std::f64::consts::PI.powi(2) / (8.0 * l * l);
            let s: f64 = (1..=50).map(|j| (-((2 * j - 1) as f64).powi(2) * c).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / l * s
        };
        let b = kolmogorov_sf(1.18);
        assert!((a - b).abs() < 1e-10);
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn uniform_p_values_are_calibrated() {
        let ps: Vec<f64> = (0..100)
            .map(|rep| {
                let mut rng = StreamRng::new(5, Purpose::Replica, rep);
                let xs: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
                ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).unwrap().p_value
            })
            .collect();
        let r = ks_one_sample(&ps, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn poisson_dispersion_near_one() {
        let mut rng = StreamRng::new(6, Purpose::Replica, 0);
        let pois = Poisson::new(5.0).unwrap();
        let xs: Vec<f64> = (0..1000).map(|_| rng.sample(pois)).collect();
        let r = dispersion_test(&xs).unwrap();
        assert!((0.8..=1.2).contains(&r.statistic), "{r:?}");
    }

    #[test]
    fn weighted_ks_matches_replication() {
        let mut rng = StreamRng::new(7, Purpose::Replica, 0);
        let xs: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
        let doubled: Vec<f64> = xs.iter().chain(xs.iter()).copied().collect();
        let a = weighted_ks_one_sample(&xs, &vec![2.0; 200], |x| x).unwrap();
        let b = ks_one_sample(&doubled, |x| x).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
        let c = weighted_ks_one_sample(&xs, &vec![3.5; 200], |x| x).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn chi_square_two_sample_detects_shift() {
        let mut rng = StreamRng::new(8, Purpose::Replica, 0);
        let p3 = Poisson::new(3.0).unwrap();
        let p4 = Poisson::new(4.0).unwrap();
        let a: Vec<usize> = (0..1000).map(|_| rng.sample::<f64, _>(p3) as usize).collect();
        let b: Vec<usize> = (0..1000).map(|_| rng.sample::<f64, _>(p3) as usize).collect();
        let c: Vec<usize> = (0..1000).map(|_| rng.sample::<f64, _>(p4) as usize).collect();
        assert!(chi_square_two_sample(&a, None, &b, None, 5.0).unwrap().p_value > 0.001);
        assert!(chi_square_two_sample(&a, None, &c, None, 5.0).unwrap().p_value < 1e-6);
    }

    #[test]
    fn sign_and_pearson() {
        let d = [1.0, 2.0, 0.5, -0.1, 3.0, 1.0, 1.0, 2.0, 0.0, 4.0, 1.0, 1.0];
        assert!(sign_test(&d).unwrap().p_value < 0.01);
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&x, &[1.0; 10]).is_err());
    }

    #[test]
    fn too_few_samples_rejected() {
        assert!(matches!(ks_one_sample(&[0.1; 5], |x| x), Err(Error::Degenerate(_))));
    }
}
