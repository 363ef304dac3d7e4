//! Identities that hold exactly at finite `t`, and the deterministic checks on the F-KPP solution.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::samplers::{nested_kernel, KernelTable};
use super::{replicate, zscore, ExperimentReport};
use crate::engine::{simulate, ModelParams, PruneConfig, SimSpec};
use crate::error::{Error, Result};
use crate::fkpp::{FkppTable, WaveEstimate};
use crate::frontstats::{additive_martingale, derivative_martingale, Interval};
use crate::genealogy::leftmost_decomposition;
use crate::rng::{derive_seed, Purpose, StreamRng};
use crate::stats::{ks_one_sample, normal_cdf, MeanSe};

/// `E[M_t] = 1`, `E[Z(t)] = 0` and `E Σ_i 1{X_i(t) >= a} = e^{λt} P(σB_t + ρt >= a)`
/// at `a = ρt - σ√t, ρt, ρt + σ√t`, over unpruned replicas.
pub fn many_to_one_check(t: f64, replicas: usize, seed: u64) -> Result<ExperimentReport> {
    let params = ModelParams::default();
    if !(t >= 0.0 && t.is_finite()) || replicas < 2 {
        return Err(Error::Config(format!("many-to-one needs t >= 0 and at least two replicas, got t = {t}, {replicas}")));
    }
    let mut report = ExperimentReport::new("many_to_one", json!({ "t": t, "replicas": replicas, "seed": seed, "prune": "disabled" }));
    let spread = params.sigma * t.sqrt();
    let levels = [params.rho * t - spread, params.rho * t, params.rho * t + spread];
    let rows = replicate(replicas, |i| {
        let spec = SimSpec::new(t, derive_seed(seed, Purpose::Replica, i as u64)).with_prune(PruneConfig::disabled());
        let (snap, _) = simulate(&spec)?;
        let counts = levels.map(|a| snap.positions().filter(|&x| x >= a).count() as f64);
        Ok((additive_martingale(&snap), derivative_martingale(&snap), counts))
    })?;
    let m: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let z: Vec<f64> = rows.iter().map(|r| r.1).collect();

    let check = |report: &mut ExperimentReport, name: &str, xs: &[f64], target: f64| {
        let ms = MeanSe::of(xs);
        let exact = xs.iter().all(|&x| x == xs[0]);
        if exact {
            report.exact(name, xs[0]);
            report.verdict(name, xs[0] == target, "exact", format!("{} = {target}", xs[0]));
        } else {
            report.estimate(name, ms.mean, ms.se);
            let zs = zscore(ms.mean, ms.se, target, 0.0);
            report.test(&format!("{name}_z"), zs, None);
            report.verdict(name, zs.abs() < 3.0, "|z| < 3", format!("{:.4} ± {:.4} vs {target:.4}, z = {zs:.2}", ms.mean, ms.se));
        }
    };
    check(&mut report, "M_t", &m, 1.0);
    check(&mut report, "Z_t", &z, 0.0);
    for (k, &a) in levels.iter().enumerate() {
        let counts: Vec<f64> = rows.iter().map(|r| r.2[k]).collect();
        let target = if t == 0.0 {
            f64::from(u8::from(0.0 >= a))
        } else {
            (params.lambda * t).exp() * (1.0 - normal_cdf((a - params.rho * t) / spread))
        };
        check(&mut report, &format!("count_above_{a:.3}"), &counts, target);
    }
    report.column("M_t", m);
    report.column("Z_t", z);
    Ok(report)
}

/// KS test of the empirical law of `X_1(t)` against the table's `G_t`.
pub fn pde_crosscheck(table: &FkppTable, t: f64, replicas: usize, seed: u64) -> Result<ExperimentReport> {
    if !(t > 0.0) || t > table.horizon() {
        return Err(Error::Config(format!("t = {t} must lie in (0, {}]", table.horizon())));
    }
    let params = table.meta.params;
    let mut report = ExperimentReport::new(
        "pde_crosscheck",
        json!({ "t": t, "replicas": replicas, "seed": seed, "dx": table.meta.dx, "dt": table.meta.dt, "scheme": table.meta.scheme }),
    );
    let x1 = replicate(replicas, |i| {
        let spec = SimSpec::new(t, derive_seed(seed, Purpose::Replica, i as u64))
            .with_params(params)
            .with_prune(PruneConfig::disabled());
        let (snap, _) = simulate(&spec)?;
        Ok(snap.leftmost().expect("nonempty").position)
    })?;
    let ks = ks_one_sample(&x1, |x| table.g(t, x).unwrap_or(0.0))?;
    let ms = MeanSe::of(&x1);
    report.estimate("mean_X1", ms.mean, ms.se);
    report.test("ks", ks.statistic, Some(ks.p_value));
    report.verdict("ks", ks.p_value > 0.01, "p > 0.01", format!("D = {:.4}, p = {:.3}", ks.statistic, ks.p_value));
    report.column("X1", x1);
    Ok(report)
}

fn variation(curve: &[(f64, f64)], lo: f64, hi: f64) -> (f64, usize) {
    let vals: Vec<f64> = curve.iter().filter(|(t, _)| (lo - 1e-9..=hi + 1e-9).contains(t)).map(|p| p.1).collect();
    let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min, vals.len())
}

/// `m_t(1/2) - (3/2) log t` must settle: its variation over `[40, 80]` is at
/// most half its variation over `[10, 20]`.
pub fn bramson_centering(table: &FkppTable) -> Result<ExperimentReport> {
    if table.horizon() < 80.0 {
        return Err(Error::Config(format!("table horizon {} is below 80", table.horizon())));
    }
    let mut report = ExperimentReport::new(
        "bramson_centering",
        json!({ "dx": table.meta.dx, "dt": table.meta.dt, "horizon": table.horizon(), "scheme": table.meta.scheme }),
    );
    let curve: Vec<(f64, f64)> = table
        .median_curve()
        .into_iter()
        .filter(|(t, _)| *t >= 1.0)
        .map(|(t, m)| (t, m - 1.5 * t.ln()))
        .collect();
    let (early, n1) = variation(&curve, 10.0, 20.0);
    let (late, n2) = variation(&curve, 40.0, 80.0);
    if n1 < 2 || n2 < 2 {
        return Err(Error::Config("table stores too few slices in [10, 20] or [40, 80]".into()));
    }
    report.exact("variation_10_20", early);
    report.exact("variation_40_80", late);
    report.exact("ratio", late / early);
    report.verdict(
        "cauchy",
        late <= 0.5 * early,
        "variation[40,80] <= 0.5 variation[10,20]",
        format!("{late:.4} vs {early:.4} (ratio {:.3})", late / early),
    );
    report.column("t", curve.iter().map(|p| p.0).collect());
    report.column("m_minus_log", curve.iter().map(|p| p.1).collect());
    Ok(report)
}

/// `w(x) / (|x| e^x)` on `[-8, -4]` of the converged profile, in both centring conventions.
pub fn tail_constant_check(wave: &WaveEstimate) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(
        "tail_constant",
        json!({ "t": wave.t, "window": [wave.tail.lo, wave.tail.hi], "calibration_window": [wave.calibration.lo, wave.calibration.hi] }),
    );
    report.exact("C", wave.c());
    report.exact("C_B", wave.c_b());
    report.exact("variation", wave.tail.variation);
    report.exact("rms_residual", wave.tail.rms_residual);
    report.exact("eps_star", wave.calibration.eps_star);
    report.exact("median_C", wave.median_tail.c);
    report.exact("median_C_B", wave.median_c_b.c_b);
    report.exact("median_variation", wave.median_tail.variation);
    report.verdict(
        "tail",
        wave.tail.variation < 0.1,
        "variation < 0.1",
        format!("C = {:.4}, variation {:.3}, rms residual {:.3}", wave.c(), wave.tail.variation, wave.tail.rms_residual),
    );
    report.note(format!(
        "centred at the median the same ratio varies by {:.3} (C = {:.4}, C_B = {:.4})",
        wave.median_tail.variation, wave.median_tail.c, wave.median_c_b.c_b
    ));
    Ok(report)
}

/// The weight `f` of the branch measure, as a function of the age `t - τ` of a birth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BackwardWeight {
    /// `f ≡ 0`.
    Zero,
    /// `f = 1{age <= zeta}`.
    Window { zeta: f64 },
}

impl BackwardWeight {
    fn at(&self, age: f64) -> f64 {
        match *self {
            BackwardWeight::Zero => 0.0,
            BackwardWeight::Window { zeta } => f64::from(u8::from(age <= zeta)),
        }
    }
}

/// `F` is the indicator that the path stays at or above `barrier` on the grid
/// (`F ≡ 1` without a barrier); the branch measure enters through
/// `exp(-Σ_i f(t - τ_i) Σ_j α_j N_i(A_j))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinalFunctional {
    pub barrier: Option<f64>,
    pub weight: BackwardWeight,
    pub alphas: Vec<f64>,
    pub sets: Vec<Interval>,
    /// Grid on which `F` reads the path.
    pub grid: f64,
    /// Inner runs per kernel node when `f ≢ 0`.
    pub inner: usize,
    pub batches: usize,
}

impl Default for SpinalFunctional {
    fn default() -> Self {
        SpinalFunctional {
            barrier: Some(-5.0),
            weight: BackwardWeight::Zero,
            alphas: Vec::new(),
            sets: Vec::new(),
            grid: 0.02,
            inner: 400,
            batches: 8,
        }
    }
}

impl SpinalFunctional {
    fn validate(&self, t: f64) -> Result<()> {
        if self.alphas.len() != self.sets.len() || self.alphas.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::Config("need one nonnegative alpha per set".into()));
        }
        if !(self.grid > 0.0) || (t / self.grid - (t / self.grid).round()).abs() > 1e-6 {
            return Err(Error::Config(format!("grid {} must divide t = {t}", self.grid)));
        }
        if self.weight != BackwardWeight::Zero && (self.inner < 2 || self.batches < 2) {
            return Err(Error::Config("the nested kernel needs at least two inner runs and two batches".into()));
        }
        Ok(())
    }

    fn passes(&self, xs: impl IntoIterator<Item = f64>) -> bool {
        match self.barrier {
            Some(b) => xs.into_iter().all(|x| x >= b),
            None => true,
        }
    }

    fn is_trivial(&self) -> bool {
        self.weight == BackwardWeight::Zero || self.alphas.iter().all(|&a| a == 0.0)
    }
}

/// Below this age `G` is taken from the one-split expansion instead of the table.
const SHORT_AGE: f64 = 0.05;

/// `G_r(y)` for a BBM of short duration `r`: one particle, or two independent
/// ones after a split, each at `ρ r + σ √r N(0, 1)`. The error is `O(r^2)`.
fn g_short(params: &ModelParams, r: f64, y: f64) -> f64 {
    let p = normal_cdf((y - params.rho * r) / (params.sigma * r.sqrt()));
    let q = (-params.lambda * r).exp();
    1.0 - (q * (1.0 - p) + (1.0 - q) * (1.0 - p) * (1.0 - p))
}

fn kernel_g(table: &FkppTable, r: f64, y: f64) -> f64 {
    let params = &table.meta.params;
    if r < SHORT_AGE {
        g_short(params, r, y)
    } else {
        table.g_extended(r, y)
    }
}

/// `E[F(X_{1,t}) e^{-⟨branch measure, f α⟩}]` two ways: directly over BBM runs,
/// and over single drift-ρ Brownian paths `ξ` as
/// `e^{λt} E[F(ξ) exp(-2λ ∫_0^t K_{t-s}(ξ_t - ξ_s) ds)]` with `K = G + D`,
/// `D` the nested kernel (zero when `f ≡ 0`).
pub fn spinal_identity_check(
    table: &FkppTable,
    t: f64,
    functional: &SpinalFunctional,
    replicas: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    functional.validate(t)?;
    if !(t > 0.0) || t > table.horizon() {
        return Err(Error::Config(format!("t = {t} must lie in (0, {}]", table.horizon())));
    }
    let params = table.meta.params;
    let mut report = ExperimentReport::new(
        "spinal_identity",
        json!({ "t": t, "replicas": replicas, "seed": seed, "functional": functional }),
    );

    // Direct side.
    let lhs: Vec<f64> = replicate(replicas, |i| {
        let spec = SimSpec::new(t, derive_seed(seed, Purpose::Replica, i as u64))
            .with_params(params)
            .with_prune(PruneConfig::disabled())
            .with_uniform_checkpoints(functional.grid);
        let (snap, arena) = simulate(&spec)?;
        let leaf = snap.leftmost().expect("nonempty").node;
        let path: Vec<f64> = arena.grid().iter().map(|&s| arena.ancestral_position(leaf, s)).collect::<Result<_>>()?;
        if !functional.passes(path) {
            return Ok(0.0);
        }
        if functional.is_trivial() {
            return Ok(1.0);
        }
        let decomp = leftmost_decomposition(&arena, &snap)?;
        let mut exponent = 0.0;
        for r in &decomp.records {
            let f = functional.weight.at(t - r.tau);
            if f > 0.0 {
                exponent += f * r.relatives.laplace_exponent(&functional.alphas, &functional.sets);
            }
        }
        Ok((-exponent).exp())
    })?;
    let lhs_ms = MeanSe::of(&lhs);

    // Kernel for the branch measure.
    let kernel: Option<KernelTable> = match functional.weight {
        BackwardWeight::Window { zeta } if !functional.is_trivial() => {
            let reach = zeta.min(t);
            let nodes = ((reach / 0.05).ceil() as usize).max(1);
            let grid: Vec<f64> = (0..=nodes).map(|k| reach * k as f64 / nodes as f64).collect();
            Some(nested_kernel(
                &grid,
                &functional.alphas,
                &functional.sets,
                functional.inner,
                functional.batches,
                &params,
                derive_seed(seed, Purpose::Nested, 0),
            )?)
        }
        _ => None,
    };

    // Spine side: ξ on a grid of step δ, the integral by the midpoint rule with step 2δ.
    let per_grid = ((functional.grid / 0.01).round() as usize).max(1);
    let delta = functional.grid / (2 * per_grid) as f64;
    let steps = (t / delta).round() as usize;
    let sets_batches = kernel.as_ref().map_or(0, |k| k.batches());
    let rhs_rows: Vec<(f64, Vec<f64>)> = replicate(replicas, |i| {
        let mut rng = StreamRng::new(seed, Purpose::Spine, i as u64);
        let mut xi = Vec::with_capacity(steps + 1);
        xi.push(0.0);
        let sd = params.sigma * delta.sqrt();
        for _ in 0..steps {
            let last = *xi.last().unwrap();
            xi.push(last + params.rho * delta + sd * rng.sample::<f64, _>(StandardNormal));
        }
        let f_ok = functional.passes(xi.iter().step_by(2 * per_grid).copied());
        if !f_ok {
            return Ok((0.0, vec![0.0; sets_batches]));
        }
        let end = xi[steps];
        let mut g_int = 0.0;
        let mut d_int = 0.0;
        let mut d_batches = vec![0.0; sets_batches];
        for k in (1..steps).step_by(2) {
            let s = k as f64 * delta;
            let (r, y) = (t - s, end - xi[k]);
            g_int += 2.0 * delta * kernel_g(table, r, y);
            if let Some(kt) = &kernel {
                d_int += 2.0 * delta * kt.eval(r, y);
                for (b, acc) in d_batches.iter_mut().enumerate() {
                    *acc += 2.0 * delta * kt.eval_batch(b, r, y);
                }
            }
        }
        let scale = (params.lambda * t).exp();
        let rate = 2.0 * params.lambda;
        let value = scale * (-rate * (g_int + d_int)).exp();
        let batch_values = d_batches.iter().map(|d| scale * (-rate * (g_int + d)).exp()).collect();
        Ok((value, batch_values))
    })?;
    let rhs: Vec<f64> = rhs_rows.iter().map(|r| r.0).collect();
    let rhs_ms = MeanSe::of(&rhs);
    let kernel_se = if sets_batches > 1 {
        let means: Vec<f64> = (0..sets_batches)
            .map(|b| rhs_rows.iter().map(|r| r.1[b]).sum::<f64>() / replicas as f64)
            .collect();
        MeanSe::of(&means).se
    } else {
        0.0
    };
    if kernel_se > 0.25 * rhs_ms.mean.abs() {
        return Err(Error::Diagnostics(format!(
            "nested kernel standard error {kernel_se:.3} swamps the estimate {:.3}; raise the inner sample size",
            rhs_ms.mean
        )));
    }
    let rhs_se = (rhs_ms.se.powi(2) + kernel_se.powi(2)).sqrt();

    if lhs.iter().all(|&x| x == lhs[0]) {
        report.exact("lhs", lhs[0]);
    } else {
        report.estimate("lhs", lhs_ms.mean, lhs_ms.se);
    }
    report.estimate("rhs", rhs_ms.mean, rhs_se);
    if kernel.is_some() {
        report.estimate("rhs_kernel_se", kernel_se, 0.0);
    }
    let lhs_se = if lhs_ms.se.is_finite() { lhs_ms.se } else { 0.0 };
    let z = zscore(lhs_ms.mean, lhs_se, rhs_ms.mean, rhs_se);
    report.test("z", z, None);
    report.verdict(
        "agreement",
        z.abs() < 3.0,
        "|z| < 3",
        format!("LHS {:.4} ± {:.4}, RHS {:.4} ± {:.4}, z = {z:.2}", lhs_ms.mean, lhs_se, rhs_ms.mean, rhs_se),
    );
    report.column("lhs", lhs);
    report.column("rhs", rhs);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_age_expansion_is_a_distribution_function() {
        let p = ModelParams::default();
        let mut prev = 0.0;
        for i in -400..400 {
            let g = g_short(&p, 0.02, i as f64 * 0.005);
            assert!((0.0..=1.0).contains(&g));
            assert!(g >= prev);
            prev = g;
        }
        assert!(g_short(&p, 0.02, 5.0) > 1.0 - 1e-12);
    }

    #[test]
    fn backward_weight_window() {
        let w = BackwardWeight::Window { zeta: 1.0 };
        assert_eq!(w.at(0.5), 1.0);
        assert_eq!(w.at(1.5), 0.0);
        assert_eq!(BackwardWeight::Zero.at(0.0), 0.0);
    }
}
