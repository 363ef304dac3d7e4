use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::GammaPath;
use crate::error::{Error, Result};
use crate::fkpp::FkppTable;

/// `exp(-2 ∫_0^H G_v(σ Γ_v) dv)` together with an estimate of the neglected tail.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathWeight {
    /// `∫_0^H G_v(σ Γ_v) dv` by the trapezoid rule on the path knots.
    pub integral: f64,
    pub weight: f64,
    /// Estimate of `∫_H^∞` from the stretching bound along an extrapolated path.
    pub remainder: f64,
    /// Set when `remainder` exceeds the tolerance handed to [`path_weight`].
    pub flagged: bool,
}

impl PathWeight {
    /// Lower end of the weight once the remainder is accounted for.
    pub fn weight_lower(&self) -> f64 {
        self.weight * (-2.0 * self.remainder).exp()
    }
}

/// Default tolerance on the remainder of the path integral.
pub const REMAINDER_TOL: f64 = 1e-2;

pub fn path_weight(path: &GammaPath, table: &FkppTable, tol: f64) -> Result<PathWeight> {
    let horizon = *path.times.last().unwrap_or(&0.0);
    if horizon > table.horizon() + 1e-9 {
        return Err(Error::Config(format!(
            "path horizon {horizon} exceeds the table horizon {}",
            table.horizon()
        )));
    }
    let sigma = table.meta.params.sigma;
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (&s, &g) in path.times.iter().zip(&path.values) {
        let f = table.g(s, sigma * g)?;
        if let Some((s0, f0)) = prev {
            integral += 0.5 * (s - s0) * (f + f0);
        }
        prev = Some((s, f));
    }
    let remainder = tail_remainder(path, table, horizon);
    Ok(PathWeight { integral, weight: (-2.0 * integral).exp(), remainder, flagged: remainder > tol })
}

/// The path is continued past the horizon along its terminal trend: frozen
/// during an unfinished Brownian phase, `b - R_H sqrt((v - T_b)/(H - T_b))`
/// in the Bessel phase. `G` is replaced by the stretching bound around a
/// logarithmically advancing median.
fn tail_remainder(path: &GammaPath, table: &FkppTable, horizon: f64) -> f64 {
    if horizon <= 0.0 {
        return 0.0;
    }
    let sigma = table.meta.params.sigma;
    let c = table.stretching_c;
    let m_h = table.median_at(horizon);
    let last = *path.values.last().unwrap();
    let extrapolate = |v: f64| match path.t_b {
        Some(tb) if horizon > tb => {
            let r = path.b - last;
            path.b - r * ((v - tb) / (horizon - tb)).sqrt()
        }
        _ => last,
    };
    let bound = |v: f64| {
        let r = sigma * extrapolate(v) - (m_h + 1.5 * (v / horizon).ln());
        (c * (r.abs() + 1.0) * r.exp()).min(1.0)
    };
    // Geometric grid over [H, 1000 H].
    let n = 400;
    let ratio = 1000f64.powf(1.0 / n as f64);
    let mut total = 0.0;
    let mut v = horizon;
    let mut f = bound(v);
    for _ in 0..n {
        let w = v * ratio;
        let g = bound(w);
        total += 0.5 * (w - v) * (f + g);
        v = w;
        f = g;
    }
    total
}

/// Settings for continuing a path past its grid horizon on a geometric time grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Continuation {
    /// Step is `max(dt, rel_step * v)`.
    pub rel_step: f64,
    /// Give up (and flag) past this time.
    pub v_max: f64,
    /// Stop once the Bessel phase has pushed the integrand below this value.
    pub g_floor: f64,
    /// Stop once the integral exceeds this value (the weight is then below `e^{-2 kill}`).
    pub kill: f64,
}

impl Default for Continuation {
    fn default() -> Self {
        Continuation { rel_step: 0.02, v_max: 1e12, g_floor: 1e-12, kill: 40.0 }
    }
}

/// The full weight `exp(-2 ∫_0^∞ G_v(σ Γ_v) dv)`: the grid part as in
/// [`path_weight`], then an independent continuation of `Γ^(b)` from its state
/// at the horizon (Brownian with bridge crossing detection until `T_b`, then
/// `b` minus a 3-d Bessel process), with `G` extended past the table horizon.
pub fn continued_weight(path: &GammaPath, table: &FkppTable, cont: &Continuation, rng: &mut impl Rng) -> Result<PathWeight> {
    let grid = path_weight(path, table, f64::INFINITY)?;
    let sigma = table.meta.params.sigma;
    let b = path.b;
    let g = |v: f64, x: f64| table.g_extended(v, sigma * x);

    let mut v = *path.times.last().unwrap();
    let mut x = *path.values.last().unwrap();
    // Bessel state as a 3-vector; by symmetry only its norm matters at the start.
    let mut bessel = path.t_b.map(|_| [b - x, 0.0, 0.0]);
    let mut total = grid.integral;
    let mut f = g(v, x);
    loop {
        if total > cont.kill {
            break;
        }
        if bessel.is_some() && f < cont.g_floor && x < b - 1.0 {
            break;
        }
        if v > cont.v_max {
            return Ok(PathWeight { integral: total, weight: (-2.0 * total).exp(), remainder: f64::INFINITY, flagged: true });
        }
        let h = path.dt.max(cont.rel_step * v);
        match bessel.as_mut() {
            Some(w) => {
                let sd = h.sqrt();
                for c in w.iter_mut() {
                    *c += sd * rng.sample::<f64, _>(StandardNormal);
                }
                x = b - (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
                v += h;
            }
            None => {
                let next = x + h.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let crossed = next >= b || rng.random::<f64>() < (-2.0 * (b - x) * (b - next) / h).exp();
                if crossed {
                    let a = b - x;
                    let z = super::gamma::normal_beyond(a / h.sqrt(), rng);
                    let tau = (a * a / (z * z)).min(h);
                    v += tau;
                    x = b;
                    bessel = Some([0.0; 3]);
                    let fb = g(v, x);
                    total += 0.5 * tau * (f + fb);
                    f = fb;
                    continue;
                }
                x = next;
                v += h;
            }
        }
        let fv = g(v, x);
        total += 0.5 * h * (f + fv);
        f = fv;
    }
    Ok(PathWeight { integral: total, weight: (-2.0 * total).exp(), remainder: 0.0, flagged: false })
}
