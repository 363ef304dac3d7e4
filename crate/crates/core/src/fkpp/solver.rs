use serde::{Deserialize, Serialize};

use super::{FkppTable, Slice, TableMeta};
use crate::engine::ModelParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Forward Euler for diffusion and reaction; needs `dt <= dx^2 / (2 D)`.
    Explicit,
    /// Backward Euler diffusion with explicit reaction.
    SemiImplicit,
    /// Strang splitting: exact logistic half steps around a Crank-Nicolson
    /// step of the compact fourth-order Laplacian, started with implicit
    /// Euler half steps.
    Strang,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "explicit" => Ok(Scheme::Explicit),
            "semi-implicit" => Ok(Scheme::SemiImplicit),
            "strang" => Ok(Scheme::Strang),
            _ => Err(Error::Config(format!("unknown scheme {s:?} (explicit, semi-implicit, strang)"))),
        }
    }
}

/// Storage spacing by time range: `(until, every)` pairs, increasing in `until`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoragePlan(pub Vec<(f64, f64)>);

impl Default for StoragePlan {
    fn default() -> Self {
        StoragePlan(vec![(1.0, 0.0), (30.0, 0.05), (100.0, 0.5), (f64::INFINITY, 5.0)])
    }
}

impl StoragePlan {
    /// Spacing in effect at time `t`; 0 means every step.
    fn every(&self, t: f64) -> f64 {
        self.0.iter().find(|(until, _)| t <= *until + 1e-9).map(|p| p.1).unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkppSpec {
    pub params: ModelParams,
    pub dx: f64,
    pub dt: f64,
    /// Half width of the computational window around the front.
    pub half_width: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// When false the logistic term is dropped (pure drift-diffusion).
    pub reaction: bool,
    /// Initial condition `1{x >= a}`.
    pub initial_shift: f64,
    pub storage: StoragePlan,
    /// Extra times that are always stored.
    pub extra_times: Vec<f64>,
    /// Time between window recentrings.
    pub recenter_every: f64,
}

impl Default for FkppSpec {
    fn default() -> Self {
        FkppSpec {
            params: ModelParams::default(),
            dx: 0.02,
            dt: 0.01,
            half_width: 60.0,
            horizon: 100.0,
            scheme: Scheme::Strang,
            reaction: true,
            initial_shift: 0.0,
            storage: StoragePlan::default(),
            extra_times: Vec::new(),
            recenter_every: 1.0,
        }
    }
}

impl FkppSpec {
    /// Long run for the converged wave profile and the constants: horizon 1000
    /// on a wide window with sparse storage.
    pub fn wave() -> Self {
        FkppSpec {
            dx: 0.04,
            dt: 0.01,
            half_width: 150.0,
            horizon: 1000.0,
            storage: StoragePlan(vec![(1.0, 0.0), (100.0, 0.5), (f64::INFINITY, 10.0)]),
            ..Self::default()
        }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_grid(mut self, dx: f64, dt: f64) -> Self {
        self.dx = dx;
        self.dt = dt;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for (name, v) in [("dx", self.dx), ("dt", self.dt), ("half_width", self.half_width), ("recenter_every", self.recenter_every)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be nonnegative, got {}", self.horizon)));
        }
        let d = self.params.diffusion();
        match self.scheme {
            Scheme::Explicit => {
                let bound = self.dx * self.dx / (2.0 * d);
                if self.dt > bound * (1.0 + 1e-12) {
                    return Err(Error::Config(format!(
                        "explicit scheme unstable: dt = {} exceeds dx^2 / (2 D) = {bound}",
                        self.dt
                    )));
                }
            }
            Scheme::SemiImplicit => {}
            Scheme::Strang => {}
        }
        if self.scheme != Scheme::Strang && self.reaction && self.params.lambda * self.dt > 1.0 {
            return Err(Error::Config(format!(
                "explicit reaction needs lambda * dt <= 1, got {}",
                self.params.lambda * self.dt
            )));
        }
        Ok(())
    }
}

/// Constant-coefficient tridiagonal system `-a v_{i-1} + b v_i - a v_{i+1} = r_i`,
/// factorised once.
struct Tridiag {
    a: f64,
    cp: Vec<f64>,
    inv: Vec<f64>,
}

impl Tridiag {
    fn new(n: usize, a: f64, b: f64) -> Self {
        let mut cp = vec![0.0; n];
        let mut inv = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let den = b + a * prev;
            inv[i] = 1.0 / den;
            cp[i] = -a * inv[i];
            prev = cp[i];
        }
        Tridiag { a, cp, inv }
    }

    fn solve(&self, r: &mut [f64]) {
        let n = r.len();
        let mut prev = 0.0;
        for i in 0..n {
            r[i] = (r[i] + self.a * prev) * self.inv[i];
            prev = r[i];
        }
        for i in (0..n - 1).rev() {
            r[i] -= self.cp[i] * r[i + 1];
        }
    }
}

/// Backward Euler step of `v_t = D v_yy` with ghost values 0 (left) and 1 (right).
fn implicit_step(v: &mut [f64], sys: &Tridiag, r: f64) {
    let n = v.len();
    v[n - 1] += r;
    sys.solve(v);
}

/// Crank-Nicolson step for the compact Laplacian `B v' = (D / dx^2) A v` with
/// `B = (1, 10, 1) / 12` and `A = (1, -2, 1)`.
fn compact_cn_step(v: &mut [f64], tmp: &mut Vec<f64>, sys: &Tridiag, r: f64) {
    let n = v.len();
    tmp.clear();
    tmp.extend_from_slice(v);
    let off = 1.0 / 12.0 + 0.5 * r;
    let diag = 10.0 / 12.0 - r;
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { tmp[i - 1] };
        let right = if i + 1 == n { 1.0 } else { tmp[i + 1] };
        v[i] = off * (left + right) + diag * tmp[i];
    }
    // Right ghost value 1 on the implicit side.
    v[n - 1] += 0.5 * r - 1.0 / 12.0;
    sys.solve(v);
}

/// Implicit Euler step for the compact Laplacian with `r = D dt / dx^2`.
fn compact_implicit_step(v: &mut [f64], tmp: &mut Vec<f64>, sys: &Tridiag, r: f64) {
    let n = v.len();
    tmp.clear();
    tmp.extend_from_slice(v);
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { tmp[i - 1] };
        let right = if i + 1 == n { 1.0 } else { tmp[i + 1] };
        v[i] = (left + 10.0 * tmp[i] + right) / 12.0;
    }
    v[n - 1] += r - 1.0 / 12.0;
    sys.solve(v);
}

fn explicit_diffusion(v: &mut [f64], tmp: &mut Vec<f64>, r: f64) {
    let n = v.len();
    tmp.clear();
    tmp.extend_from_slice(v);
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { tmp[i - 1] };
        let right = if i + 1 == n { 1.0 } else { tmp[i + 1] };
        v[i] = tmp[i] + r * (left - 2.0 * tmp[i] + right);
    }
}

fn logistic_exact(v: &mut [f64], growth: f64) {
    // Solution of v' = lambda v (1 - v) after time h, with growth = e^{lambda h}.
    for u in v.iter_mut() {
        let g = *u * growth;
        *u = g / (1.0 - *u + g);
    }
}

fn logistic_euler(v: &mut [f64], k: f64) {
    for u in v.iter_mut() {
        *u += k * *u * (1.0 - *u);
    }
}

/// Checks monotonicity and range; repairs violations up to `1e-10`.
fn enforce_invariants(v: &mut [f64], t: f64) -> Result<()> {
    let mut run: f64 = 0.0;
    for u in v.iter_mut() {
        if !u.is_finite() {
            return Err(Error::Numeric(format!("non-finite value at t = {t}")));
        }
        if *u < run - 1e-10 || *u < -1e-10 || *u > 1.0 + 1e-10 {
            return Err(Error::Numeric(format!(
                "monotonicity or range violated at t = {t}: value {u} after running maximum {run}"
            )));
        }
        *u = u.clamp(run, 1.0);
        run = *u;
    }
    Ok(())
}

/// Solves the equation up to `spec.horizon` and returns the stored slices.
pub fn solve(spec: &FkppSpec) -> Result<FkppTable> {
    spec.validate()?;
    let p = spec.params;
    let d = p.diffusion();
    let dx = spec.dx;
    let half = (spec.half_width / dx).round() as usize;
    let n = 2 * half;
    if n < 4 {
        return Err(Error::Config("window must hold at least four cells".into()));
    }
    let a = spec.initial_shift;
    // Cell i has centre y0 + i dx; the Heaviside jump falls on the interface at a.
    let mut y0 = a - (half as f64 - 0.5) * dx;
    let mut v: Vec<f64> = (0..n).map(|i| if i >= half { 1.0 } else { 0.0 }).collect();
    let mut tmp = Vec::with_capacity(n);

    let steps = (spec.horizon / spec.dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps > 0 { spec.horizon / steps as f64 } else { spec.dt };
    let r = d * dt / dx / dx;
    let be_full = Tridiag::new(n, r, 1.0 + 2.0 * r);
    let compact_cn = Tridiag::new(n, 0.5 * r - 1.0 / 12.0, 10.0 / 12.0 + r);
    // Half step: r' = r / 2.
    let compact_half = Tridiag::new(n, 0.5 * r - 1.0 / 12.0, 10.0 / 12.0 + r);
    let growth_half = (p.lambda * 0.5 * dt).exp();
    const STARTUP: usize = 2;

    let mut extra: Vec<f64> = spec.extra_times.iter().copied().filter(|&s| s <= spec.horizon).collect();
    extra.sort_by(f64::total_cmp);
    let mut extra_pos = 0;

    let mut slices = vec![Slice { t: 0.0, x0: y0, values: v.clone() }];
    let mut last_store = 0.0;
    let recenter_steps = ((spec.recenter_every / dt).round() as usize).max(1);
    for step in 1..=steps {
        let t = step as f64 * dt;
        match spec.scheme {
            Scheme::Explicit => {
                explicit_diffusion(&mut v, &mut tmp, r);
                if spec.reaction {
                    logistic_euler(&mut v, p.lambda * dt);
                }
            }
            Scheme::SemiImplicit => {
                implicit_step(&mut v, &be_full, r);
                if spec.reaction {
                    logistic_euler(&mut v, p.lambda * dt);
                }
            }
            Scheme::Strang => {
                if spec.reaction {
                    logistic_exact(&mut v, growth_half);
                }
                if step <= STARTUP {
                    compact_implicit_step(&mut v, &mut tmp, &compact_half, 0.5 * r);
                    compact_implicit_step(&mut v, &mut tmp, &compact_half, 0.5 * r);
                } else {
                    compact_cn_step(&mut v, &mut tmp, &compact_cn, r);
                }
                if spec.reaction {
                    logistic_exact(&mut v, growth_half);
                }
            }
        }
        enforce_invariants(&mut v, t)?;

        if step % recenter_steps == 0 {
            let front = v.partition_point(|&u| u < 0.5) as isize;
            let shift = front - half as isize;
            if shift != 0 {
                recenter(&mut v, shift);
                y0 += shift as f64 * dx;
            }
        }

        let every = spec.storage.every(t);
        let due_extra = extra_pos < extra.len() && extra[extra_pos] <= t + 0.5 * dt;
        if due_extra {
            while extra_pos < extra.len() && extra[extra_pos] <= t + 0.5 * dt {
                extra_pos += 1;
            }
        }
        let due = step == steps || every == 0.0 || t - last_store >= every - 0.5 * dt || due_extra;
        if due {
            last_store = t;
            slices.push(Slice { t, x0: y0 + p.rho * t, values: v.clone() });
        }
    }

    let meta = TableMeta {
        params: p,
        scheme: spec.scheme,
        dx,
        dt,
        cells: n,
        horizon: spec.horizon,
        reaction: spec.reaction,
        initial_shift: a,
        boundary: "dirichlet 0/1, window recentred on the front by whole cells".into(),
    };
    FkppTable::new(meta, slices)
}

/// Moves the window by `shift` cells (positive: towards larger `y`), padding with equilibria.
fn recenter(v: &mut [f64], shift: isize) {
    let n = v.len() as isize;
    if shift > 0 {
        let s = shift.min(n) as usize;
        v.copy_within(s.., 0);
        let len = v.len();
        v[len - s..].fill(1.0);
    } else {
        let s = (-shift).min(n) as usize;
        let len = v.len();
        v.copy_within(..len - s, s);
        v[..s].fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_solver_inverts() {
        let n = 7;
        let (a, b) = (0.3, 1.6);
        let sys = Tridiag::new(n, a, b);
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut r: Vec<f64> = (0..n)
            .map(|i| {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let rr = if i + 1 < n { x[i + 1] } else { 0.0 };
                -a * l + b * x[i] - a * rr
            })
            .collect();
        sys.solve(&mut r);
        for i in 0..n {
            assert!((r[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn recenter_pads_with_equilibria() {
        let mut v = vec![0.0, 0.1, 0.5, 0.9, 1.0];
        recenter(&mut v, 1);
        assert_eq!(v, vec![0.1, 0.5, 0.9, 1.0, 1.0]);
        recenter(&mut v, -2);
        assert_eq!(v, vec![0.0, 0.0, 0.1, 0.5, 0.9]);
    }

    #[test]
    fn equilibria_are_fixed_points() {
        for scheme in [Scheme::Explicit, Scheme::SemiImplicit, Scheme::Strang] {
            let mut tmp = Vec::new();
            for c in [0.0, 1.0] {
                let mut v = vec![c; 10];
                match scheme {
                    Scheme::Explicit => {
                        logistic_euler(&mut v, 0.01);
                    }
                    Scheme::SemiImplicit => logistic_euler(&mut v, 0.01),
                    Scheme::Strang => logistic_exact(&mut v, 0.01f64.exp()),
                }
                assert!(v.iter().all(|&u| u == c));
                // Interior diffusion of a constant is zero.
                let mut w = vec![c; 10];
                explicit_diffusion(&mut w, &mut tmp, 0.25);
                assert!(w[1..9].iter().all(|&u| u == c));
            }
        }
    }

    #[test]
    fn stability_bound_enforced() {
        let spec = FkppSpec::default().with_scheme(Scheme::Explicit).with_grid(0.02, 0.01);
        assert!(matches!(solve(&spec), Err(Error::Config(_))));
        let spec = FkppSpec::default().with_scheme(Scheme::SemiImplicit).with_grid(0.02, 2.0);
        assert!(matches!(solve(&spec), Err(Error::Config(_))));
    }
}
