use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ks_one_sample, MIN_SAMPLES};

/// Maximum-likelihood fit of the Gumbel law for minima,
/// `P(X > x) = exp(-e^{(x - location) / scale})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GumbelFit {
    pub location: f64,
    pub scale: f64,
    pub ks_distance: f64,
    pub ks_p_value: f64,
    pub n: usize,
}

/// `P(X <= x)` for the minima Gumbel law.
pub fn gumbel_min_cdf(x: f64, location: f64, scale: f64) -> f64 {
    -(-((x - location) / scale).exp()).exp_m1()
}

pub fn gumbel_fit(samples: &[f64]) -> Result<GumbelFit> {
    let n = samples.len();
    if n < 100 {
        return Err(Error::Degenerate(format!("gumbel_fit needs at least 100 samples, got {n}")));
    }
    debug_assert!(n >= MIN_SAMPLES);
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite sample".into()));
    }
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    if !(spread > 1e-12 * max.abs().max(1.0)) {
        return Err(Error::Degenerate("all samples are equal".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    // Score equation for the scale: beta = E_w[x] - mean, with weights e^{x / beta}.
    let weighted_mean = |beta: f64| {
        let (mut num, mut den) = (0.0, 0.0);
        for &x in samples {
            let w = ((x - max) / beta).exp();
            num += (x - max) * w;
            den += w;
        }
        max + num / den
    };
    let g = |beta: f64| beta - (weighted_mean(beta) - mean);
    let (mut lo, mut hi) = (spread * 1e-6, spread);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let scale = 0.5 * (lo + hi);
    let s: f64 = samples.iter().map(|&x| ((x - max) / scale).exp()).sum();
    let location = max + scale * (s / n as f64).ln();
    let ks = ks_one_sample(samples, |x| gumbel_min_cdf(x, location, scale))?;
    Ok(GumbelFit { location, scale, ks_distance: ks.statistic, ks_p_value: ks.p_value, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamRng};
    use rand::Rng;

    fn draws(n: usize, loc: f64, scale: f64, seed: u64) -> Vec<f64> {
        let mut rng = StreamRng::new(seed, Purpose::Replica, 0);
        // Inverse CDF: x = loc + scale * log(-log(1 - u)).
        (0..n).map(|_| loc + scale * (-(1.0 - rng.random::<f64>()).ln()).ln()).collect()
    }

    #[test]
    fn recovers_standard_law() {
        let fit = gumbel_fit(&draws(10_000, 0.0, 1.0, 1)).unwrap();
        assert!(fit.location.abs() < 0.05, "{fit:?}");
        assert!((fit.scale - 1.0).abs() < 0.05, "{fit:?}");
        assert!(fit.ks_p_value > 0.01);
    }

    #[test]
    fn affine_equivariance() {
        let xs = draws(2000, 0.3, 0.8, 2);
        let f = gumbel_fit(&xs).unwrap();
        let (a, b) = (2.5, -1.25);
        let g = gumbel_fit(&xs.iter().map(|x| a * x + b).collect::<Vec<_>>()).unwrap();
        assert!((g.location - (a * f.location + b)).abs() < 1e-9);
        assert!((g.scale - a * f.scale).abs() < 1e-9);
        assert!((g.ks_distance - f.ks_distance).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(gumbel_fit(&[1.0; 500]), Err(Error::Degenerate(_))));
        assert!(matches!(gumbel_fit(&[1.0; 50]), Err(Error::Degenerate(_))));
    }
}
