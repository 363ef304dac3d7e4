//! The `Γ^(b)` path: Brownian motion up to its first passage at `b`, then
//! `b` minus a three-dimensional Bessel process started at 0.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, StreamRng};
use crate::stats::normal_cdf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPath {
    pub b: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Knot times: the uniform grid with `T_b` inserted when it is reached.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// First passage at `b`; `None` when the Brownian phase outlasts the horizon.
    pub t_b: Option<f64>,
}

impl GammaPath {
    /// False when the path must be resampled with a longer horizon.
    pub fn is_complete(&self) -> bool {
        self.t_b.is_some()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Linear interpolation between knots; clamped to the last knot.
    pub fn value_at(&self, s: f64) -> f64 {
        crate::numerics::interp_clamped(&self.times, &self.values, s)
    }

    /// `Y(s) = -σ Γ_s`.
    pub fn backward_value(&self, sigma: f64, s: f64) -> f64 {
        -sigma * self.value_at(s)
    }
}

/// A draw from `N(0,1)` conditioned on `|Z| > c`.
pub(super) fn normal_beyond(c: f64, rng: &mut impl Rng) -> f64 {
    if c < 1.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() > c {
                return z.abs();
            }
        }
    }
    // Exponential proposal for the tail.
    let alpha = 0.5 * (c + (c * c + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = c + e / alpha;
        if rng.random::<f64>() <= (-(z - alpha).powi(2) / 2.0).exp() {
            return z;
        }
    }
}

/// Sample `Γ^(b)` on a grid of step `dt` up to `horizon`.
pub fn sample_gamma(b: f64, dt: f64, horizon: f64, seed: u64) -> Result<GammaPath> {
    let mut rng = StreamRng::new(seed, Purpose::Gamma, 0);
    sample_gamma_with(b, dt, horizon, &mut rng)
}

pub fn sample_gamma_with(b: f64, dt: f64, horizon: f64, rng: &mut impl Rng) -> Result<GammaPath> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("level b must be positive, got {b}")));
    }
    if !(dt > 0.0 && horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("need dt > 0 and a finite horizon, got dt {dt}, horizon {horizon}")));
    }
    let steps = (horizon / dt).round() as usize;
    let sd = dt.sqrt();
    let mut times = Vec::with_capacity(steps + 2);
    let mut values = Vec::with_capacity(steps + 2);
    times.push(0.0);
    values.push(0.0);

    let mut x = 0.0;
    let mut t_b = None;
    let mut i = 0;
    while i < steps {
        let next = x + sd * rng.sample::<f64, _>(StandardNormal);
        let crossed = next >= b || rng.random::<f64>() < (-2.0 * (b - x) * (b - next) / dt).exp();
        if crossed {
            // Hitting time given a hit within the step: a Lévy variable conditioned below dt.
            let a = b - x;
            let z = normal_beyond(a / sd, rng);
            let tau = (a * a / (z * z)).min(dt);
            t_b = Some(i as f64 * dt + tau);
            break;
        }
        x = next;
        i += 1;
        times.push(i as f64 * dt);
        values.push(x);
    }
    if let Some(tb) = t_b {
        times.push(tb);
        values.push(b);
        let mut w = [0.0f64; 3];
        let mut last = tb;
        for j in (i + 1)..=steps {
            let s = j as f64 * dt;
            let h = (s - last).max(0.0).sqrt();
            for c in &mut w {
                *c += h * rng.sample::<f64, _>(StandardNormal);
            }
            last = s;
            if s > tb {
                times.push(s);
                values.push(b - (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt());
            }
        }
    }
    Ok(GammaPath { b, dt, horizon: steps as f64 * dt, times, values, t_b })
}

/// `P(T_b <= u)` for standard Brownian motion.
pub fn first_passage_cdf(b: f64, u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        2.0 * (1.0 - normal_cdf(b / u.sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;
    use proptest::prelude::*;

    #[test]
    fn starts_at_zero_and_peaks_at_b() {
        for seed in 0..50 {
            let p = sample_gamma(1.5, 0.01, 20.0, seed).unwrap();
            assert_eq!(p.values[0], 0.0);
            assert_eq!(p.times[0], 0.0);
            if let Some(tb) = p.t_b {
                assert_eq!(p.sup(), 1.5);
                let k = p.times.iter().position(|&s| s == tb).unwrap();
                assert_eq!(p.values[k], 1.5);
                assert!(p.values[..k].iter().all(|&v| v < 1.5));
                assert!(p.values[k + 1..].iter().all(|&v| v < 1.5));
            } else {
                assert!(p.sup() < 1.5);
            }
            assert!(p.times.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(sample_gamma(0.0, 0.01, 1.0, 1).is_err());
        assert!(sample_gamma(1.0, 0.0, 1.0, 1).is_err());
        assert!(sample_gamma(1.0, 0.01, f64::INFINITY, 1).is_err());
    }

    #[test]
    fn tail_sampler_stays_beyond_threshold() {
        let mut rng = StreamRng::new(3, Purpose::Gamma, 9);
        for c in [0.1, 0.9, 1.0, 3.0, 12.0] {
            for _ in 0..200 {
                assert!(normal_beyond(c, &mut rng) > c);
            }
        }
    }

    #[test]
    fn first_passage_law_scaled_down() {
        // Passages beyond the horizon are censored: test the law of T_b given T_b <= h
        // and the censored fraction separately.
        let (b, dt, h) = (1.0, 1e-2, 4.0);
        let n = 4000;
        let tb: Vec<f64> = (0..n).filter_map(|s| sample_gamma(b, dt, h, s).unwrap().t_b).collect();
        let fh = first_passage_cdf(b, h);
        let r = ks_one_sample(&tb, |u| first_passage_cdf(b, u.min(h)) / fh).unwrap();
        assert!(r.p_value > 0.001, "{r:?}");
        let z = (tb.len() as f64 - n as f64 * fh) / (n as f64 * fh * (1.0 - fh)).sqrt();
        assert!(z.abs() < 4.0, "censoring z = {z}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn sup_is_bounded_by_b(b in 0.1f64..4.0, seed in any::<u64>()) {
            let p = sample_gamma(b, 0.02, 10.0, seed).unwrap();
            prop_assert!(p.sup() <= b);
            prop_assert_eq!(p.values[0], 0.0);
        }
    }
}
