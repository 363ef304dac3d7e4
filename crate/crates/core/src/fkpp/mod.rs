//! Finite-difference solver for `G_t(x) = P(X_1(t) <= x)`.
//!
//! Under the branching rate `lambda`, drift `rho` and diffusion `sigma`,
//! `G` solves
//!
//! ```text
//! u_t = D u_xx - rho u_x + lambda u (1 - u),   D = sigma^2 / 2,   u(0, x) = 1{x >= a}.
//! ```
//!
//! The solver works in the frame `y = x - rho t`, where the equation is a pure
//! heat equation with logistic reaction, and keeps a fixed-size window centred
//! on the front by integer cell shifts.

mod io;
mod solver;
mod wave;

pub use solver::{solve, FkppSpec, Scheme, StoragePlan};
pub use wave::{
    calibrate_tail, estimate_c_b, tail_constant, tail_fit, wave_estimate, wave_profile, CbEstimate, TailAnsatz, TailCalibration,
    TailFit, WaveEstimate, WaveProfile, TAIL_THRESHOLD,
};

use serde::{Deserialize, Serialize};

use crate::engine::ModelParams;
use crate::error::{Error, Result};

/// One stored time slice on a cell-centred grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub t: f64,
    /// `x` of the centre of cell 0.
    pub x0: f64,
    pub values: Vec<f64>,
}

impl Slice {
    pub fn x(&self, i: usize, dx: f64) -> f64 {
        self.x0 + i as f64 * dx
    }
}

/// Metadata describing how a table was produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub params: ModelParams,
    pub scheme: Scheme,
    pub dx: f64,
    pub dt: f64,
    pub cells: usize,
    pub horizon: f64,
    pub reaction: bool,
    pub initial_shift: f64,
    pub boundary: String,
}

/// The solution surface, immutable after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FkppTable {
    pub meta: TableMeta,
    pub slices: Vec<Slice>,
    /// Constant `c` of the bound `G_t(m_t + r) <= c (|r| + 1) e^r` used below the grid.
    pub stretching_c: f64,
    medians: Vec<f64>,
}

/// Result of [`FkppTable::lookup`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lookup {
    pub value: f64,
    /// True when the value comes from the stretching bound rather than the grid.
    pub extrapolated: bool,
}

impl FkppTable {
    pub(crate) fn new(meta: TableMeta, slices: Vec<Slice>) -> Result<Self> {
        if slices.is_empty() {
            return Err(Error::Numeric("table without slices".into()));
        }
        let mut table = FkppTable { meta, slices, stretching_c: 0.0, medians: Vec::new() };
        table.medians = (0..table.slices.len()).map(|i| table.slice_level(i, 0.5).unwrap_or(f64::NAN)).collect();
        table.stretching_c = table.fit_stretching_c();
        Ok(table)
    }

    pub fn dx(&self) -> f64 {
        self.meta.dx
    }

    pub fn horizon(&self) -> f64 {
        self.slices.last().map(|s| s.t).unwrap_or(0.0)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.slices.iter().map(|s| s.t)
    }

    /// Index of the slice stored at time `t`.
    pub fn slice_index(&self, t: f64) -> Option<usize> {
        let i = self.slices.partition_point(|s| s.t < t - 1e-9);
        (i < self.slices.len() && (self.slices[i].t - t).abs() <= 1e-9).then_some(i)
    }

    pub fn slice(&self, t: f64) -> Result<&Slice> {
        self.slice_index(t)
            .map(|i| &self.slices[i])
            .ok_or_else(|| Error::Query(format!("no slice stored at t = {t}")))
    }

    /// `m_t(1/2)` of every stored slice.
    pub fn median_curve(&self) -> Vec<(f64, f64)> {
        self.slices.iter().zip(&self.medians).map(|(s, &m)| (s.t, m)).collect()
    }

    /// `m_t(1/2)` interpolated linearly between stored slices (clamped at the ends).
    pub fn median_at(&self, t: f64) -> f64 {
        let ts: Vec<f64> = self.slices.iter().map(|s| s.t).collect();
        crate::numerics::interp_clamped(&ts, &self.medians, t)
    }

    fn slice_level(&self, i: usize, eps: f64) -> Result<f64> {
        let s = &self.slices[i];
        let v = &s.values;
        let dx = self.meta.dx;
        let j = v.partition_point(|&u| u < eps);
        if j == 0 || j == v.len() {
            return Err(Error::Domain(format!("level {eps} not attained on the grid at t = {}", s.t)));
        }
        let (a, b) = (v[j - 1], v[j]);
        let frac = if b > a { (eps - a) / (b - a) } else { 0.0 };
        Ok(s.x(j - 1, dx) + frac * dx)
    }

    /// `m_t(eps) = inf{x : G_t(x) = eps}` by monotone linear interpolation, for a stored `t`.
    pub fn level_position(&self, t: f64, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("level {eps} outside (0, 1)")));
        }
        let i = self
            .slice_index(t)
            .ok_or_else(|| Error::Query(format!("no slice stored at t = {t}")))?;
        self.slice_level(i, eps)
    }

    fn slice_value(&self, i: usize, x: f64) -> Lookup {
        let s = &self.slices[i];
        let dx = self.meta.dx;
        let f = (x - s.x0) / dx;
        let n = s.values.len();
        if f < 0.0 {
            // Below the grid: the stretching bound, never above the first stored value's scale.
            let m = self.medians[i];
            let r = x - m;
            let bound = if r.is_finite() && s.t > 0.0 { self.stretching_c * (r.abs() + 1.0) * r.exp() } else { 0.0 };
            return Lookup { value: bound.clamp(0.0, 1.0), extrapolated: true };
        }
        if f >= (n - 1) as f64 {
            return Lookup { value: 1.0, extrapolated: false };
        }
        let j = f.floor() as usize;
        let w = f - j as f64;
        Lookup { value: (s.values[j] * (1.0 - w) + s.values[j + 1] * w).clamp(0.0, 1.0), extrapolated: false }
    }

    /// `G_t(x)` with bilinear interpolation; below the grid the stretching bound is used.
    pub fn lookup(&self, t: f64, x: f64) -> Result<Lookup> {
        if !(t >= 0.0) || t > self.horizon() + 1e-9 {
            return Err(Error::Domain(format!("t = {t} outside the table range [0, {}]", self.horizon())));
        }
        let i = self.slices.partition_point(|s| s.t < t);
        if i < self.slices.len() && (self.slices[i].t - t).abs() <= 1e-12 {
            return Ok(self.slice_value(i, x));
        }
        if i == 0 {
            return Ok(self.slice_value(0, x));
        }
        let i = i.min(self.slices.len() - 1);
        let (a, b) = (&self.slices[i - 1], &self.slices[i]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let la = self.slice_value(i - 1, x);
        let lb = self.slice_value(i, x);
        Ok(Lookup {
            value: (la.value * (1.0 - w) + lb.value * w).clamp(0.0, 1.0),
            extrapolated: la.extrapolated || lb.extrapolated,
        })
    }

    /// Shorthand for `lookup(t, x).value`.
    pub fn g(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.lookup(t, x)?.value)
    }

    /// `G_t(x)` for any `t >= 0`: past the horizon the last slice is carried
    /// along the logarithmic correction, `G_T(x - (3/2) log(t/T))`.
    pub fn g_extended(&self, t: f64, x: f64) -> f64 {
        let h = self.horizon();
        if t <= h {
            self.g(t, x).unwrap_or(0.0)
        } else {
            self.g(h, x - 1.5 * (t / h).ln()).unwrap_or(0.0)
        }
    }

    /// Largest ratio `G_t(m_t + r) / ((|r| + 1) e^r)` over stored slices with `t >= 0.05`
    /// and `r` in `[-20, 0]`.
    fn fit_stretching_c(&self) -> f64 {
        let dx = self.meta.dx;
        let mut c: f64 = 0.0;
        for (s, &m) in self.slices.iter().zip(&self.medians) {
            if s.t < 0.05 || !m.is_finite() {
                continue;
            }
            for (i, &v) in s.values.iter().enumerate() {
                let r = s.x(i, dx) - m;
                if (-20.0..=0.0).contains(&r) {
                    c = c.max(v / ((r.abs() + 1.0) * r.exp()));
                }
            }
        }
        c.max(0.5)
    }
}

#[cfg(test)]
mod tests;
