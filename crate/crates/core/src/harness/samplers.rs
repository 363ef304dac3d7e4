//! Checks on the limit-object samplers: the `Γ^(b)` first passage, the fused
//! thinning, and the Laplace transform of `𝒬` computed two ways.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{replicate, zscore, Context, ExperimentReport};
use crate::decoration::{
    first_passage_cdf, sample_decoration, sample_gamma, sample_pool_decoration, sample_y_with, BackbonePool, DecorationConfig,
};
use crate::engine::{simulate, ModelParams, PruneConfig, SimSpec};
use crate::error::{Error, Result};
use crate::frontstats::Interval;
use crate::rng::{derive_seed, Purpose};
use crate::stats::{ks_one_sample, weighted_mean_se, MeanSe};

/// First-passage law of `Γ^(b)` against `P(T_b <= u) = 2(1 - Φ(b/√u))`.
///
/// Passages later than `horizon` are censored: the KS test is run on the law
/// given `T_b <= horizon` and the censored fraction is checked separately.
pub fn gamma_first_passage(b: f64, dt: f64, horizon: f64, samples: usize, seed: u64) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(
        "gamma_first_passage",
        json!({ "b": b, "dt": dt, "horizon": horizon, "samples": samples, "seed": seed }),
    );
    let rows = replicate(samples, |i| {
        let p = sample_gamma(b, dt, horizon, derive_seed(seed, Purpose::Gamma, i as u64))?;
        let sup_ok = match p.t_b {
            Some(_) => p.sup() == b,
            None => p.sup() < b,
        };
        Ok((p.t_b, sup_ok))
    })?;
    let hits: Vec<f64> = rows.iter().filter_map(|r| r.0).collect();
    let bad_sup = rows.iter().filter(|r| !r.1).count();
    let fh = first_passage_cdf(b, horizon);
    let ks = ks_one_sample(&hits, |u| first_passage_cdf(b, u.min(horizon)) / fh)?;
    let n = samples as f64;
    let frac = hits.len() as f64 / n;
    let z = (frac - fh) / (fh * (1.0 - fh) / n).sqrt();
    report.estimate("hit_fraction", frac, (frac * (1.0 - frac) / n).sqrt());
    report.exact("hit_fraction_exact", fh);
    report.test("ks", ks.statistic, Some(ks.p_value));
    report.test("censoring_z", z, None);
    report.verdict("ks", ks.p_value > 0.01, "p > 0.01", format!("D = {:.4}, p = {:.3}", ks.statistic, ks.p_value));
    report.verdict("censoring", z.abs() < 3.0, "|z| < 3", format!("{frac:.4} vs {fh:.4}, z = {z:.2}"));
    report.verdict("sup", bad_sup == 0, "exact", format!("{bad_sup} paths with sup Γ != b after T_b"));
    report.column("t_b", hits);
    Ok(report)
}

/// Per-bin acceptance frequency of the thinning candidates against `1 - G_t(-Y(t))`.
pub fn thinning_check(ctx: &Context, candidates: usize, bins: usize, seed: u64) -> Result<ExperimentReport> {
    let table = ctx.table()?;
    let pool = ctx.pool()?;
    let params = table.meta.params;
    let cfg = DecorationConfig::default();
    let mut report = ExperimentReport::new(
        "thinning",
        json!({ "candidates": candidates, "bins": bins, "zeta_max": cfg.zeta_max, "seed": seed, "pool": pool.len() }),
    );
    if bins == 0 {
        return Err(Error::Config("need at least one bin".into()));
    }
    let per_draw = 2.0 * params.lambda * cfg.zeta_max;
    let draws = ((candidates as f64 / per_draw) * 1.05).ceil() as usize + 1;
    let samples = replicate(draws, |i| sample_pool_decoration(pool, &params, &cfg, derive_seed(seed, Purpose::Decoration, i as u64)))?;
    let cands: Vec<(f64, f64, bool)> = samples
        .iter()
        .flat_map(|s| s.candidates.iter())
        .take(candidates)
        .map(|c| {
            let p = 1.0 - table.g(c.t, -c.start).unwrap_or(0.0);
            (c.t, p, c.accepted)
        })
        .collect();
    if cands.len() < candidates {
        report.note(format!("only {} candidates drawn", cands.len()));
    }
    let width = cfg.zeta_max / bins as f64;
    let mut all_ok = true;
    for k in 0..bins {
        let in_bin: Vec<&(f64, f64, bool)> = cands.iter().filter(|c| ((c.0 / width) as usize).min(bins - 1) == k).collect();
        let n = in_bin.len() as f64;
        let observed = in_bin.iter().filter(|c| c.2).count() as f64 / n;
        let expected = in_bin.iter().map(|c| c.1).sum::<f64>() / n;
        let se = (in_bin.iter().map(|c| c.1 * (1.0 - c.1)).sum::<f64>()).sqrt() / n;
        let z = zscore(observed, se, expected, 0.0);
        all_ok &= z.abs() < 3.0;
        let name = format!("bin_{k}");
        report.estimate(&format!("{name}_observed"), observed, se);
        report.exact(&format!("{name}_expected"), expected);
        report.test(&format!("{name}_z"), z, None);
        report.verdict(
            &name,
            z.abs() < 3.0,
            "|z| < 3",
            format!("t in [{:.1}, {:.1}]: {observed:.4} vs {expected:.4} over {n} candidates, z = {z:.2}", k as f64 * width, (k + 1) as f64 * width),
        );
    }
    report.note(format!("all bins within 3 SE: {all_ok}"));
    Ok(report)
}

/// Monte Carlo estimate of
/// `D_r(x) = E[(1 - exp(-Σ_j α_j N(r)(A_j + x))) 1{min N(r) >= x}]`
/// on a grid of durations `r` and positions `x`, kept per batch so that its
/// noise can be propagated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub r: Vec<f64>,
    pub x0: f64,
    pub dx: f64,
    pub nx: usize,
    /// Runs per node, over all batches.
    pub inner: usize,
    batch_values: Vec<Vec<f64>>,
    mean: Vec<f64>,
    /// Largest batch standard error over the grid.
    pub max_se: f64,
}

impl KernelTable {
    pub fn batches(&self) -> usize {
        self.batch_values.len()
    }

    fn eval_on(&self, v: &[f64], r: f64, x: f64) -> f64 {
        let last = *self.r.last().unwrap();
        if r > last + 1e-9 {
            return 0.0;
        }
        let fx = (x - self.x0) / self.dx;
        if fx < 0.0 || fx > (self.nx - 1) as f64 {
            return 0.0;
        }
        let j = (fx.floor() as usize).min(self.nx - 2);
        let wx = fx - j as f64;
        let row = |i: usize| v[i * self.nx + j] * (1.0 - wx) + v[i * self.nx + j + 1] * wx;
        if self.r.len() == 1 || r <= self.r[0] {
            return row(0);
        }
        let i = self.r.partition_point(|&s| s <= r).clamp(1, self.r.len() - 1);
        let wr = ((r - self.r[i - 1]) / (self.r[i] - self.r[i - 1])).clamp(0.0, 1.0);
        row(i - 1) * (1.0 - wr) + row(i) * wr
    }

    /// Bilinear interpolation of the pooled estimate; zero past the last `r` and off the `x` grid.
    pub fn eval(&self, r: f64, x: f64) -> f64 {
        self.eval_on(&self.mean, r, x)
    }

    pub fn eval_batch(&self, batch: usize, r: f64, x: f64) -> f64 {
        self.eval_on(&self.batch_values[batch], r, x)
    }
}

/// Builds a [`KernelTable`] from `inner` BBM runs per node of `r_grid`, split into `batches`.
pub fn nested_kernel(
    r_grid: &[f64],
    alphas: &[f64],
    sets: &[Interval],
    inner: usize,
    batches: usize,
    params: &ModelParams,
    seed: u64,
) -> Result<KernelTable> {
    if r_grid.is_empty() || r_grid.windows(2).any(|w| !(w[1] > w[0])) || r_grid[0] < 0.0 {
        return Err(Error::Config("kernel durations must be nonnegative and increasing".into()));
    }
    if alphas.len() != sets.len() || alphas.iter().any(|&a| !(a >= 0.0)) {
        return Err(Error::Config("need one nonnegative alpha per set".into()));
    }
    if sets.iter().any(|a| !(a.lo.is_finite() && a.hi.is_finite())) {
        return Err(Error::Config("kernel sets must be bounded intervals".into()));
    }
    if batches < 2 || inner < batches {
        return Err(Error::Config("need at least two batches and one run per batch".into()));
    }
    let hi_max = sets.iter().map(|a| a.hi).fold(0.0, f64::max);
    let dx = 0.02;
    let x0 = -12.0 - hi_max;
    let nx = ((24.0 + hi_max) / dx).round() as usize + 1;
    let per_batch = inner / batches;
    let prune = PruneConfig::window(hi_max + 4.0);
    let nr = r_grid.len();

    let cells: Vec<Vec<f64>> = (0..nr * batches)
        .into_par_iter()
        .map(|cell| {
            let (i, b) = (cell / batches, cell % batches);
            let mut acc = vec![0.0; nx];
            for j in 0..per_batch {
                let run = (i * inner + b * per_batch + j) as u64;
                let spec = SimSpec::new(r_grid[i], derive_seed(seed, Purpose::Nested, run))
                    .with_params(*params)
                    .with_prune(prune);
                let (snap, _) = simulate(&spec)?;
                let atoms: Vec<f64> = snap.positions().collect();
                let min = atoms[0];
                let first = (((min - hi_max - x0) / dx).ceil().max(0.0)) as usize;
                let last = (((min - x0) / dx).floor()).min((nx - 1) as f64);
                if last < 0.0 {
                    continue;
                }
                for (k, slot) in acc.iter_mut().enumerate().take(last as usize + 1).skip(first) {
                    let x = x0 + k as f64 * dx;
                    let mut e = 0.0;
                    for (&a, set) in alphas.iter().zip(sets) {
                        if a > 0.0 {
                            let lo = atoms.partition_point(|&y| y < set.lo + x);
                            let hi = atoms.partition_point(|&y| y <= set.hi + x);
                            e += a * hi.saturating_sub(lo) as f64;
                        }
                    }
                    *slot += -(-e).exp_m1();
                }
            }
            for v in &mut acc {
                *v /= per_batch as f64;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let mut batch_values = vec![vec![0.0; nr * nx]; batches];
    for (cell, acc) in cells.into_iter().enumerate() {
        let (i, b) = (cell / batches, cell % batches);
        batch_values[b][i * nx..(i + 1) * nx].copy_from_slice(&acc);
    }
    let mut mean = vec![0.0; nr * nx];
    let mut max_se: f64 = 0.0;
    for k in 0..nr * nx {
        let xs: Vec<f64> = batch_values.iter().map(|v| v[k]).collect();
        let ms = MeanSe::of(&xs);
        mean[k] = ms.mean;
        max_se = max_se.max(ms.se);
    }
    Ok(KernelTable { r: r_grid.to_vec(), x0, dx, nx, inner: per_batch * batches, batch_values, mean, max_se })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOptions {
    pub alphas: Vec<f64>,
    pub sets: Vec<Interval>,
    /// Births older than this are ignored on both sides.
    pub zeta: f64,
    /// Weighted backbones per side.
    pub draws: usize,
    /// Kernel runs per duration node.
    pub inner: usize,
    pub batches: usize,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions {
            alphas: vec![1.0],
            sets: vec![Interval::new(0.0, 2.0)],
            zeta: 8.0,
            draws: 10_000,
            inner: 4000,
            batches: 8,
        }
    }
}

/// Durations for the kernel: fine where the integrand moves fastest.
fn kernel_grid(zeta: f64) -> Vec<f64> {
    let mut g = Vec::new();
    let mut v: f64 = 0.0;
    while v < zeta - 1e-9 {
        g.push(v);
        v += if v < 2.0 - 1e-9 { 0.05 } else { 0.1 };
        v = (v * 1e6).round() / 1e6;
    }
    g.push(zeta);
    g
}

/// `E[e^{-Σ α_j 𝒬(A_j)}]` from decorated backbones, against the ratio
/// `∫ E[e^{-2∫ G*_v}] db / ∫ E[e^{-2∫ G_v}] db` evaluated on an independent set
/// of backbones with `G* - G` from the nested kernel. The ratio side does not
/// see the atom at 0 and is multiplied by `e^{-Σ α_j 1{0 ∈ A_j}}`.
pub fn laplace_ratio_check(ctx: &Context, opts: &LaplaceOptions, seed: u64) -> Result<ExperimentReport> {
    let table = ctx.table()?;
    let base = ctx.pool()?;
    let params = table.meta.params;
    if !(opts.zeta > 0.0 && opts.zeta <= base.spec.horizon) {
        return Err(Error::Config(format!("zeta must lie in (0, {}]", base.spec.horizon)));
    }
    let mut report = ExperimentReport::new(
        "laplace_ratio",
        json!({ "options": opts, "seed": seed, "proposal": base.spec }),
    );
    let atom_factor = (-opts
        .alphas
        .iter()
        .zip(&opts.sets)
        .map(|(a, s)| a * f64::from(u8::from(s.contains(0.0))))
        .sum::<f64>())
    .exp();
    let hi_max = opts.sets.iter().map(|a| a.hi).fold(0.0, f64::max);

    // Direct side: one decoration per weighted backbone.
    let direct_pool = sample_y_with(table, &base.spec, base.proposal.clone(), opts.draws, derive_seed(seed, Purpose::Proposal, 1))?;
    let cfg = DecorationConfig::default().with_zeta(opts.zeta).with_window(hi_max);
    let direct: Vec<f64> = direct_pool
        .backbones
        .par_iter()
        .map(|bb| {
            let path = bb.path(&direct_pool.spec);
            let d = sample_decoration(&path, &params, &cfg, derive_seed(seed, Purpose::Decoration, bb.index as u64))?;
            Ok(d.q_within(opts.zeta).laplace_functional(&opts.alphas, &opts.sets))
        })
        .collect::<Result<_>>()?;
    let direct_ms = weighted_mean_se(&direct, &direct_pool.importance());

    // Ratio side.
    let ratio_pool = sample_y_with(table, &base.spec, base.proposal.clone(), opts.draws, derive_seed(seed, Purpose::Proposal, 2))?;
    if ratio_pool.c1.mean < 3.0 * ratio_pool.c1.se {
        return Err(Error::Diagnostics(format!(
            "ratio denominator {:.3e} ± {:.3e} is consistent with zero",
            ratio_pool.c1.mean, ratio_pool.c1.se
        )));
    }
    let trivial = opts.alphas.iter().all(|&a| a == 0.0);
    let (ratio_ms, kernel_se) = if trivial {
        (MeanSe { mean: 1.0, se: 0.0, n: opts.draws }, 0.0)
    } else {
        let kernel = nested_kernel(
            &kernel_grid(opts.zeta),
            &opts.alphas,
            &opts.sets,
            opts.inner,
            opts.batches,
            &params,
            derive_seed(seed, Purpose::Nested, 0),
        )?;
        report.exact("kernel_max_se", kernel.max_se);
        ratio_side(&ratio_pool, &kernel, &params, opts.zeta, atom_factor)
    };
    let ratio_se = (ratio_ms.se.powi(2) + kernel_se.powi(2)).sqrt();

    report.estimate("direct", direct_ms.mean, direct_ms.se);
    report.estimate("ratio", ratio_ms.mean, ratio_se);
    report.estimate("ratio_kernel_se", kernel_se, 0.0);
    report.estimate("c1", ratio_pool.c1.mean, ratio_pool.c1.se);
    report.exact("ess_direct", direct_pool.ess);
    report.exact("ess_ratio", ratio_pool.ess);
    let z = zscore(direct_ms.mean, direct_ms.se, ratio_ms.mean, ratio_se);
    report.test("z", z, None);
    report.verdict(
        "agreement",
        z.abs() < 3.0,
        "|z| < 3",
        format!("direct {:.4} ± {:.4}, ratio {:.4} ± {:.4}, z = {z:.2}", direct_ms.mean, direct_ms.se, ratio_ms.mean, ratio_se),
    );
    report.column("direct", direct);
    Ok(report)
}

/// Self-normalised `E[e^{-2λ ∫_0^ζ D_v(σ Γ_v) dv}]` over the pool, with the
/// standard error from the spread across kernel batches.
fn ratio_side(pool: &BackbonePool, kernel: &KernelTable, params: &ModelParams, zeta: f64, atom_factor: f64) -> (MeanSe, f64) {
    let nb = kernel.batches();
    let rows: Vec<(f64, Vec<f64>)> = pool
        .backbones
        .par_iter()
        .map(|bb| {
            let path = bb.path(&pool.spec);
            let mut total = 0.0;
            let mut per_batch = vec![0.0; nb];
            let mut prev: Option<(f64, f64, Vec<f64>)> = None;
            for (&s, &g) in path.times.iter().zip(&path.values) {
                if s > zeta + 1e-9 {
                    break;
                }
                let x = params.sigma * g;
                let f = kernel.eval(s, x);
                let fb: Vec<f64> = (0..nb).map(|b| kernel.eval_batch(b, s, x)).collect();
                if let Some((s0, f0, fb0)) = &prev {
                    let h = s - s0;
                    total += 0.5 * h * (f + f0);
                    for b in 0..nb {
                        per_batch[b] += 0.5 * h * (fb[b] + fb0[b]);
                    }
                }
                prev = Some((s, f, fb));
            }
            let rate = 2.0 * params.lambda;
            (atom_factor * (-rate * total).exp(), per_batch.iter().map(|d| atom_factor * (-rate * d).exp()).collect())
        })
        .collect();
    let w = pool.importance();
    let values: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let ms = weighted_mean_se(&values, &w);
    let batch_means: Vec<f64> = (0..nb)
        .map(|b| weighted_mean_se(&rows.iter().map(|r| r.1[b]).collect::<Vec<_>>(), &w).mean)
        .collect();
    (ms, MeanSe::of(&batch_means).se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_grid_is_increasing_and_ends_at_zeta() {
        let g = kernel_grid(8.0);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 8.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.len(), 40 + 60 + 1);
    }

    #[test]
    fn kernel_at_zero_duration_is_exact() {
        // N(0) = δ_0: D_0(x) = 1 - e^{-α} for x in [-2, 0] with A = [0, 2], zero elsewhere.
        let p = ModelParams::default();
        let k = nested_kernel(&[0.0], &[1.0], &[Interval::new(0.0, 2.0)], 4, 2, &p, 1).unwrap();
        let v = 1.0 - (-1.0f64).exp();
        assert!((k.eval(0.0, -1.0) - v).abs() < 1e-12);
        assert!((k.eval(0.0, -1.7) - v).abs() < 1e-12);
        assert_eq!(k.eval(0.0, -3.0), 0.0);
        assert_eq!(k.eval(0.0, 0.5), 0.0);
        assert_eq!(k.max_se, 0.0);
        assert_eq!(k.eval(1.0, -1.0), 0.0);
    }
}
