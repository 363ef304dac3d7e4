//! Statistics of a population seen from its front: martingales, the centering
//! `m_t`, recentred extremal point measures and Gumbel fits.

mod gumbel;
mod measure;

pub use gumbel::{gumbel_fit, gumbel_min_cdf, GumbelFit};
pub use measure::{Interval, PointMeasure};

use serde::{Deserialize, Serialize};

use crate::engine::PopulationSnapshot;
use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;

/// `M_t = sum_i e^{-X_i(t)}`.
///
/// Particles removed by pruning enter with their value at removal, which keeps
/// the estimator unbiased (each removed subtree has conditional mean equal to it).
pub fn additive_martingale(snapshot: &PopulationSnapshot) -> f64 {
    let mut s: CompensatedSum = snapshot.positions().map(|x| (-x).exp()).collect();
    s.add(snapshot.pruned_additive);
    s.value()
}

/// `Z(t) = sum_i X_i(t) e^{-X_i(t)}`, with the same treatment of pruned particles.
pub fn derivative_martingale(snapshot: &PopulationSnapshot) -> f64 {
    let mut s: CompensatedSum = snapshot.positions().map(|x| x * (-x).exp()).collect();
    s.add(snapshot.pruned_derivative);
    s.value()
}

/// `m_t = (3/2) log t + C_B`.
pub fn front_center(t: f64, c_b: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("front_center needs t > 0, got {t}")));
    }
    Ok(1.5 * t.ln() + c_b)
}

/// Summary of a snapshot as seen from the front.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontRecord {
    pub t: f64,
    pub n: usize,
    pub x1: f64,
    pub m: f64,
    pub z: f64,
    pub m_t: f64,
    pub pruned: bool,
}

impl FrontRecord {
    pub fn new(snapshot: &PopulationSnapshot, c_b: f64) -> Result<Self> {
        let x1 = snapshot
            .leftmost()
            .ok_or_else(|| Error::Domain("empty snapshot".into()))?
            .position;
        let m_t = if snapshot.time > 0.0 { front_center(snapshot.time, c_b)? } else { f64::NAN };
        Ok(FrontRecord {
            t: snapshot.time,
            n: snapshot.len(),
            x1,
            m: additive_martingale(snapshot),
            z: derivative_martingale(snapshot),
            m_t,
            pruned: snapshot.pruned,
        })
    }

    pub const CSV_HEADER: &'static str = "t,n,x1,m,z,m_t,pruned";

    pub fn csv_row(&self) -> String {
        format!("{:?},{},{:?},{:?},{:?},{:?},{}", self.t, self.n, self.x1, self.m, self.z, self.m_t, self.pruned)
    }
}

/// How a snapshot is recentred.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Recentering {
    /// `N(t) - m_t + log(C Z)` for an externally supplied `Z`.
    External { z: f64 },
    /// `N(t) - m_t + log(C Z(t))` with the snapshot's own derivative martingale.
    Empirical,
    /// `N(t) - X_1(t)`.
    Leftmost,
}

/// The shift applied by [`recentered_measure`].
pub fn recentering_shift(snapshot: &PopulationSnapshot, mode: Recentering, c: f64, c_b: f64) -> Result<f64> {
    let log_cz = |z: f64| -> Result<f64> {
        if !(c > 0.0) {
            return Err(Error::Domain(format!("constant C must be positive, got {c}")));
        }
        if !(z > 0.0) {
            return Err(Error::Domain(format!("derivative martingale must be positive, got {z}")));
        }
        Ok((c * z).ln())
    };
    match mode {
        Recentering::External { z } => Ok(-front_center(snapshot.time, c_b)? + log_cz(z)?),
        Recentering::Empirical => Ok(-front_center(snapshot.time, c_b)? + log_cz(derivative_martingale(snapshot))?),
        Recentering::Leftmost => {
            let x1 = snapshot.leftmost().ok_or_else(|| Error::Domain("empty snapshot".into()))?;
            Ok(-x1.position)
        }
    }
}

/// The snapshot as a point measure, shifted according to `mode`.
pub fn recentered_measure(snapshot: &PopulationSnapshot, mode: Recentering, c: f64, c_b: f64) -> Result<PointMeasure> {
    let shift = recentering_shift(snapshot, mode, c, c_b)?;
    if mode == Recentering::Leftmost {
        let x1 = -shift;
        // Subtracting the minimum from itself gives exactly 0.
        return Ok(PointMeasure::new(snapshot.positions().map(|x| x - x1).collect()));
    }
    Ok(PointMeasure::new(snapshot.positions().map(|x| x + shift).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trivial_values() {
        let s0 = PopulationSnapshot::from_positions(0.0, &[0.0]);
        assert_eq!(additive_martingale(&s0), 1.0);
        assert_eq!(derivative_martingale(&s0), 0.0);
        let s = PopulationSnapshot::from_positions(1.0, &[1.7]);
        assert_eq!(additive_martingale(&s), (-1.7f64).exp());
        assert_eq!(front_center(1.0, 0.3).unwrap(), 0.3);
        let d = front_center(std::f64::consts::E.powi(2), 0.3).unwrap() - front_center(1.0, 0.3).unwrap();
        assert!((d - 3.0).abs() < 1e-14);
        assert!(front_center(0.0, 0.0).is_err());
    }

    #[test]
    fn recentering_modes() {
        let s = PopulationSnapshot::from_positions(5.0, &[0.3, 1.2, 2.5, 4.0]);
        let lead = recentered_measure(&s, Recentering::Leftmost, 1.0, 0.0).unwrap();
        assert_eq!(lead.min(), Some(0.0));
        let z = derivative_martingale(&s);
        let hat = recentered_measure(&s, Recentering::Empirical, 0.7, -0.4).unwrap();
        let bar = recentered_measure(&s, Recentering::External { z: 2.0 }, 0.7, -0.4).unwrap();
        for (a, b) in hat.atoms().iter().zip(bar.atoms()) {
            assert!((a - b - (z.ln() - 2f64.ln())).abs() < 1e-12);
        }
        let neg = PopulationSnapshot::from_positions(5.0, &[-3.0]);
        assert!(matches!(recentered_measure(&neg, Recentering::Empirical, 1.0, 0.0), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn permutation_invariant_sums(mut xs in prop::collection::vec(-5.0f64..30.0, 1..200), seed in 0u64..1000) {
            let a = PopulationSnapshot::from_positions(1.0, &xs);
            let m1 = additive_martingale(&a);
            let z1 = derivative_martingale(&a);
            // Summation order is what matters here, so sum in a shuffled order directly.
            let mut r = seed;
            for i in (1..xs.len()).rev() {
                r = r.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                xs.swap(i, (r >> 33) as usize % (i + 1));
            }
            let m2: f64 = xs.iter().map(|x| (-x).exp()).collect::<CompensatedSum>().value();
            let z2: f64 = xs.iter().map(|x| x * (-x).exp()).collect::<CompensatedSum>().value();
            prop_assert!((m1 - m2).abs() <= 1e-12 * m1.abs());
            prop_assert!((z1 - z2).abs() <= 1e-12 * xs.iter().map(|x| (x * (-x).exp()).abs()).sum::<f64>());
        }
    }
}
