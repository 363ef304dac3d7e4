use serde::{Deserialize, Serialize};

use super::FkppTable;
use crate::error::{Error, Result};
use crate::numerics::interp_clamped;

/// A slice recentred at its median: `w(x) = G_t(m_t(1/2) + x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub t: f64,
    pub center: f64,
    /// Offset of cell 0 from the centre.
    pub x0: f64,
    pub dx: f64,
    pub values: Vec<f64>,
}

impl WaveProfile {
    /// Samples `f` on the grid `x0 + i dx`, `i < n` (used for synthetic profiles).
    pub fn from_fn(x0: f64, dx: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        WaveProfile { t: f64::NAN, center: 0.0, x0, dx, values: (0..n).map(|i| f(x0 + i as f64 * dx)).collect() }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    /// Linear interpolation; 0 below and 1 above the grid.
    pub fn eval(&self, x: f64) -> f64 {
        let f = (x - self.x0) / self.dx;
        if f < 0.0 {
            return 0.0;
        }
        let n = self.values.len();
        if f >= (n - 1) as f64 {
            return 1.0;
        }
        let j = f.floor() as usize;
        let w = f - j as f64;
        self.values[j] * (1.0 - w) + self.values[j + 1] * w
    }
}

pub fn wave_profile(table: &FkppTable, t: f64) -> Result<WaveProfile> {
    let s = table.slice(t)?;
    let center = table.level_position(t, 0.5)?;
    Ok(WaveProfile { t, center, x0: s.x0 - center, dx: table.dx(), values: s.values.clone() })
}

/// Constant fit of `w(x) / g(x)` over a window, `g(x) = |x| e^x` or `e^x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub c: f64,
    /// `(max - min) / c` of the ratio over the window.
    pub variation: f64,
    /// Root-mean-square relative residual of the constant fit.
    pub rms_residual: f64,
    pub lo: f64,
    pub hi: f64,
    /// Set when the variation exceeds the declared threshold.
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailAnsatz {
    /// `C |x| e^x`.
    LinearExponential,
    /// `C e^x`.
    Exponential,
}

/// Variation threshold above which a tail fit is flagged.
pub const TAIL_THRESHOLD: f64 = 0.1;

/// Fits `w(x) ~ C |x| e^x` over `[lo, hi]` (default window `[-8, -4]`).
pub fn tail_constant(profile: &WaveProfile, lo: f64, hi: f64) -> Result<TailFit> {
    tail_fit(profile, lo, hi, TailAnsatz::LinearExponential)
}

pub fn tail_fit(profile: &WaveProfile, lo: f64, hi: f64, ansatz: TailAnsatz) -> Result<TailFit> {
    if !(lo < hi && hi < 0.0) {
        return Err(Error::Domain(format!("tail window [{lo}, {hi}] must be a nonempty interval in x < 0")));
    }
    if profile.x(0) > lo {
        return Err(Error::Domain(format!("profile starts at {} and does not reach {lo}", profile.x(0))));
    }
    let ratios: Vec<f64> = (0..profile.values.len())
        .filter(|&i| (lo..=hi).contains(&profile.x(i)))
        .map(|i| {
            let x = profile.x(i);
            let g = match ansatz {
                TailAnsatz::LinearExponential => x.abs() * x.exp(),
                TailAnsatz::Exponential => x.exp(),
            };
            profile.values[i] / g
        })
        .collect();
    if ratios.len() < 2 {
        return Err(Error::Domain("tail window holds fewer than two grid points".into()));
    }
    let c = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let rms = (ratios.iter().map(|r| (r / c - 1.0).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
    let variation = (max - min) / c;
    Ok(TailFit { c, variation, rms_residual: rms, lo, hi, flagged: variation > TAIL_THRESHOLD })
}

/// Estimate of `C_B(eps) = lim (m_t(eps) - (3/2) log t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbEstimate {
    pub eps: f64,
    pub c_b: f64,
    /// `m_T(eps) - (3/2) log T` at the horizon, before extrapolation.
    pub at_horizon: f64,
    /// Same at `T / 4`.
    pub at_quarter: f64,
    pub horizon: f64,
}

/// Removes the leading `t^{-1/2}` correction by `C = 2 f(T) - f(T/4)`.
pub fn estimate_c_b(table: &FkppTable, eps: f64) -> Result<CbEstimate> {
    let t = table.horizon();
    if t < 4.0 {
        return Err(Error::Domain(format!("horizon {t} too short to estimate C_B")));
    }
    let (ts, ms): (Vec<f64>, Vec<f64>) = table
        .slices
        .iter()
        .filter(|s| s.t >= 1.0)
        .map(|s| table.level_position(s.t, eps).map(|m| (s.t, m)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let f = |s: f64| interp_clamped(&ts, &ms, s) - 1.5 * s.ln();
    let (ft, fq) = (f(t), f(t / 4.0));
    Ok(CbEstimate { eps, c_b: 2.0 * ft - fq, at_horizon: ft, at_quarter: fq, horizon: t })
}

/// Affine fit `w(x) e^{-x} e^{x^2 / (4 D t)} = A |x| + B` over a deep-tail window.
///
/// The Gaussian factor undoes the leading finite-time cutoff of the tail.
/// Recentring the profile by `s = B / A` removes the intercept, so that the
/// shifted profile behaves as `A e^s |x| e^x` already at moderate `|x|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCalibration {
    pub slope: f64,
    pub intercept: f64,
    pub shift: f64,
    /// `w(shift)`: the level whose position serves as the front centre.
    pub eps_star: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn calibrate_tail(profile: &WaveProfile, diffusion: f64, lo: f64, hi: f64) -> Result<TailCalibration> {
    if !(lo < hi && hi < 0.0) || profile.x(0) > lo {
        return Err(Error::Domain(format!("calibration window [{lo}, {hi}] not covered by the profile")));
    }
    let t = profile.t;
    let pts: Vec<(f64, f64)> = (0..profile.values.len())
        .map(|i| profile.x(i))
        .filter(|x| (lo..=hi).contains(x))
        .map(|x| {
            let cutoff = if t.is_finite() && t > 0.0 { (x * x / (4.0 * diffusion * t)).exp() } else { 1.0 };
            (x.abs(), profile.eval(x) * (-x).exp() * cutoff)
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::Domain("calibration window holds fewer than three grid points".into()));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    if !(slope > 0.0) {
        return Err(Error::Numeric(format!("tail slope {slope} is not positive")));
    }
    let shift = intercept / slope;
    Ok(TailCalibration { slope, intercept, shift, eps_star: profile.eval(shift), lo, hi })
}

impl WaveProfile {
    /// The profile seen from `center + shift`.
    pub fn recentred(&self, shift: f64) -> WaveProfile {
        WaveProfile { t: self.t, center: self.center + shift, x0: self.x0 - shift, dx: self.dx, values: self.values.clone() }
    }
}

/// Profile, constants and level curves extracted from one table.
///
/// Two centring conventions are reported. The median convention centres at
/// `m_t(1/2)`; the calibrated convention centres at `m_t(eps_star)` where the
/// tail of the profile has no affine intercept. `c_b` and `tail` (hence `C`)
/// refer to the calibrated convention. The median-convention `C` is read off a
/// window that is not yet in the tail regime, so `log C - C_B` differs between
/// the two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveEstimate {
    pub t: f64,
    pub median_profile: WaveProfile,
    pub median_tail: TailFit,
    pub median_c_b: CbEstimate,
    pub calibration: TailCalibration,
    pub profile: WaveProfile,
    pub tail: TailFit,
    pub c_b: CbEstimate,
    /// `(t, [(eps, m_t(eps))])`.
    pub levels: Vec<(f64, Vec<(f64, f64)>)>,
}

impl WaveEstimate {
    pub fn c(&self) -> f64 {
        self.tail.c
    }

    pub fn c_b(&self) -> f64 {
        self.c_b.c_b
    }
}

/// Uses the slice at the table horizon as the converged profile.
pub fn wave_estimate(table: &FkppTable, level_times: &[f64], epsilons: &[f64]) -> Result<WaveEstimate> {
    let t = table.horizon();
    let median_profile = wave_profile(table, t)?;
    let median_tail = tail_constant(&median_profile, -8.0, -4.0)?;
    let median_c_b = estimate_c_b(table, 0.5)?;
    let calibration = calibrate_tail(&median_profile, table.meta.params.diffusion(), -16.0, -8.0)?;
    let profile = median_profile.recentred(calibration.shift);
    let tail = tail_constant(&profile, -8.0, -4.0)?;
    let c_b = estimate_c_b(table, calibration.eps_star)?;
    let mut levels = Vec::new();
    for &lt in level_times {
        let row = epsilons
            .iter()
            .map(|&e| table.level_position(lt, e).map(|m| (e, m)))
            .collect::<Result<Vec<_>>>()?;
        levels.push((lt, row));
    }
    Ok(WaveEstimate { t, median_profile, median_tail, median_c_b, calibration, profile, tail, c_b, levels })
}
