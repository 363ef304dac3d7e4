//! Limit theorems confronted at finite scale: record Poissonization, the
//! genealogical dichotomy near the tip, the decoration and the extremal measure.

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{replicate, zscore, Context, ExperimentReport};
use crate::decoration::{sample_decoration, sample_l, DecorationConfig, Decorations, LimitVariant};
use crate::engine::{simulate, stopping_line, ModelParams, PruneConfig, SimSpec};
use crate::error::{Error, Result};
use crate::fkpp::{WaveEstimate, WaveProfile};
use crate::frontstats::{derivative_martingale, front_center, recentered_measure, Interval, PointMeasure, Recentering};
use crate::genealogy::{decoration_window, leftmost_decomposition};
use crate::rng::{derive_seed, Purpose, StreamRng};
use crate::stats::{chi_square_two_sample, dispersion_test, ks_one_sample, ks_two_sample, pearson, MeanSe};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Inverse-transform draw from the profile read as a distribution function.
fn draw_from_profile(profile: &WaveProfile, u: f64) -> f64 {
    let v = &profile.values;
    let j = v.partition_point(|&w| w < u);
    if j == 0 {
        return profile.x(0);
    }
    if j == v.len() {
        return profile.x(v.len() - 1);
    }
    let (a, b) = (v[j - 1], v[j]);
    let frac = if b > a { (u - a) / (b - a) } else { 0.0 };
    profile.x(j - 1) + frac * profile.dx
}

/// Surrogates of the record process at level `k`: `H_k` i.i.d. draws of `W`
/// (law `w`, the calibrated wave profile) shifted by `log H_k + log log H_k + log C`,
/// tested against `PPP(e^x dx)`.
pub fn record_poissonization(k: f64, replicas: usize, wave: &WaveEstimate, seed: u64) -> Result<ExperimentReport> {
    let params = ModelParams::default();
    let c = wave.c();
    let mut report = ExperimentReport::new(
        "record_poissonization",
        json!({ "k": k, "replicas": replicas, "seed": seed, "C": c, "profile_t": wave.t }),
    );
    let rows = replicate(replicas, |i| {
        let line = stopping_line(&params, k, derive_seed(seed, Purpose::StoppingLine, i as u64), 50_000_000)?;
        let h = line.count();
        if h < 3 {
            return Ok(None);
        }
        let hf = h as f64;
        let shift = hf.ln() + hf.ln().ln() + c.ln();
        let mut rng = StreamRng::new(seed, Purpose::Ppp, i as u64);
        let (mut min, mut left, mut right, mut below) = (f64::INFINITY, 0.0, 0.0, 0.0);
        for _ in 0..h {
            let x = draw_from_profile(&wave.profile, rng.random::<f64>()) + shift;
            min = min.min(x);
            if (-1.0..=0.0).contains(&x) {
                left += 1.0;
            }
            if (0.0..=1.0).contains(&x) {
                right += 1.0;
            }
            if x <= 0.0 {
                below += 1.0;
            }
        }
        let gap = hf.ln().ln() - k.ln();
        Ok(Some((min, left, right, below, gap)))
    })?;
    let kept: Vec<_> = rows.iter().flatten().copied().collect();
    let skipped = replicas - kept.len();
    if skipped > 0 {
        report.note(format!("{skipped} replicas had H_k < 3 and were skipped; k may be too small for the asymptotic regime"));
    }
    if kept.len() < replicas / 2 {
        return Err(Error::Diagnostics(format!("only {} of {replicas} replicas reached H_k >= 3", kept.len())));
    }
    let mins: Vec<f64> = kept.iter().map(|r| r.0).collect();
    let left: Vec<f64> = kept.iter().map(|r| r.1).collect();
    let right: Vec<f64> = kept.iter().map(|r| r.2).collect();

    let ks = ks_one_sample(&mins, |x| 1.0 - (-x.exp()).exp())?;
    report.test("ks_leftmost", ks.statistic, Some(ks.p_value));
    report.verdict(
        "ks_leftmost",
        ks.p_value > 0.01,
        "p > 0.01",
        format!("D = {:.4}, p = {:.3} against exp(-e^x)", ks.statistic, ks.p_value),
    );
    for (name, counts, mean) in [("[-1,0]", &left, 1.0 - (-1.0f64).exp()), ("[0,1]", &right, 1f64.exp() - 1.0)] {
        let d = dispersion_test(counts)?;
        let ms = MeanSe::of(counts);
        report.estimate(&format!("mean_{name}"), ms.mean, ms.se);
        report.test(&format!("mean_{name}_z"), ms.z_against(mean), None);
        report.test(&format!("dispersion_{name}"), d.statistic, Some(d.p_value));
        report.verdict(
            &format!("dispersion_{name}"),
            (0.8..=1.2).contains(&d.statistic),
            "index in [0.8, 1.2]",
            format!("index {:.3}, mean {:.3} ± {:.3} (PPP {mean:.3})", d.statistic, ms.mean, ms.se),
        );
    }
    let void = kept.iter().filter(|r| r.3 == 0.0).count() as f64 / kept.len() as f64;
    let p0 = (-1.0f64).exp();
    report.estimate("void_(-inf,0]", void, (p0 * (1.0 - p0) / kept.len() as f64).sqrt());
    report.test("void_z", (void - p0) / (p0 * (1.0 - p0) / kept.len() as f64).sqrt(), None);
    if let Ok(r) = pearson(&left, &right) {
        report.test("count_correlation", r, None);
    }
    let mut gaps: Vec<f64> = kept.iter().map(|r| r.4).collect();
    gaps.sort_by(f64::total_cmp);
    report.exact("median_loglogH_minus_logk", gaps[gaps.len() / 2]);
    report.column("leftmost", mins);
    Ok(report)
}

/// `P(some pair in J_η(t) splits in [ζ, t - ζ])` for each `ζ`, with
/// `J_η(t) = {i : |X_i(t) - m_t| <= η}`.
pub fn genealogy_gap(
    t: f64,
    eta: f64,
    zetas: &[f64],
    replicas: usize,
    prune: f64,
    c_b: f64,
    seed: u64,
) -> Result<ExperimentReport> {
    let zmax = zetas.iter().copied().fold(0.0, f64::max);
    if t < 2.0 * zmax || zetas.is_empty() {
        return Err(Error::Config(format!("need t >= 2 max zeta, got t = {t}, max zeta {zmax}")));
    }
    let m_t = front_center(t, c_b)?;
    let mut report = ExperimentReport::new(
        "genealogy_gap",
        json!({ "t": t, "eta": eta, "zetas": zetas, "replicas": replicas, "prune": prune, "C_B": c_b, "m_t": m_t, "seed": seed }),
    );
    const BINS: usize = 10;
    let rows = replicate(replicas, |i| {
        let spec = SimSpec::new(t, derive_seed(seed, Purpose::Replica, i as u64)).with_prune(PruneConfig::window(prune));
        let (snap, arena) = simulate(&spec)?;
        let members: Vec<_> = snap.atoms.iter().filter(|a| (a.position - m_t).abs() <= eta).collect();
        let lineages = members.iter().map(|a| arena.lineage(a.node)).collect::<Result<Vec<_>>>()?;
        let mut hit = vec![false; zetas.len()];
        let mut hist = [0usize; BINS];
        for a in 0..lineages.len() {
            for b in a + 1..lineages.len() {
                let common = lineages[a].iter().zip(&lineages[b]).take_while(|(x, y)| x == y).count();
                let tau = arena.get(lineages[a][common - 1])?.event_time;
                for (h, &z) in hit.iter_mut().zip(zetas) {
                    *h |= tau >= z && tau <= t - z;
                }
                hist[((tau / t * BINS as f64) as usize).min(BINS - 1)] += 1;
            }
        }
        Ok((members.len(), hit, hist))
    })?;
    let sizes: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let size = MeanSe::of(&sizes);
    if size.mean == 0.0 {
        return Err(Error::Diagnostics(format!("no particles within {eta} of m_t = {m_t:.3}; check C_B")));
    }
    report.estimate("mean_J", size.mean, size.se);
    let n = replicas as f64;
    let mut probs = Vec::new();
    for (j, &z) in zetas.iter().enumerate() {
        let p = rows.iter().filter(|r| r.1[j]).count() as f64 / n;
        report.estimate(&format!("P(zeta={z})"), p, (p * (1.0 - p) / n).sqrt().max(1.0 / n));
        probs.push(p);
    }
    let mut order: Vec<usize> = (0..zetas.len()).collect();
    order.sort_by(|&a, &b| zetas[a].total_cmp(&zetas[b]));
    let monotone = order.windows(2).all(|w| probs[w[1]] <= probs[w[0]]);
    let last = probs[*order.last().unwrap()];
    report.verdict(
        "monotone",
        monotone,
        "nonincreasing in zeta",
        format!("{:?}", order.iter().map(|&i| (zetas[i], probs[i])).collect::<Vec<_>>()),
    );
    report.verdict("small_at_max", last < 0.1, "< 0.1 at the largest zeta", format!("{last:.4} at zeta = {zmax}"));

    // Bimodality of the split-time histogram: both end bins dominate the emptiest interior bin.
    let mut hist = [0usize; BINS];
    for r in &rows {
        for (h, x) in hist.iter_mut().zip(&r.2) {
            *h += x;
        }
    }
    let interior = hist[1..BINS - 1].iter().copied().min().unwrap_or(0) as f64;
    let ends = hist[0].min(hist[BINS - 1]) as f64;
    let ratio = if interior > 0.0 { ends / interior } else { f64::INFINITY };
    report.test("end_to_interior_ratio", ratio, None);
    report.verdict(
        "bimodal",
        ratio >= 2.0,
        "end bins at least twice the emptiest interior bin",
        format!("histogram of tau/t: {hist:?}"),
    );
    report.column("J_size", sizes);
    Ok(report)
}

/// One draw of the empirical side of the decoration comparison.
struct EmpiricalQ {
    mass: f64,
    count01: f64,
    y_s: f64,
    x1_centred: f64,
}

fn empirical_q(t: f64, zeta: f64, s: f64, m_t: f64, prune: f64, seed: u64, i: usize) -> Result<EmpiricalQ> {
    let spec = SimSpec::new(t, derive_seed(seed, Purpose::Replica, i as u64))
        .with_prune(PruneConfig::window(prune))
        .with_checkpoints(vec![t - s]);
    let (snap, arena) = simulate(&spec)?;
    let decomp = leftmost_decomposition(&arena, &snap)?;
    let q = decoration_window(&decomp, zeta)?;
    Ok(EmpiricalQ {
        mass: q.len() as f64,
        count01: q.count(Interval::new(0.0, 1.0)) as f64,
        y_s: decomp.y_at(s).ok_or_else(|| Error::Query(format!("no checkpoint at backward time {s}")))?,
        x1_centred: decomp.x1 - m_t,
    })
}

/// `Q(t, ζ)` and `Y_t(s)` from simulation against `𝒬` (births within `ζ`) and `Y(s)` from the sampler.
pub fn decoration_comparison(ctx: &Context, t: f64, zeta: f64, replicas: usize, seed: u64) -> Result<ExperimentReport> {
    let pool = ctx.pool()?;
    let (_, c_b) = ctx.constants()?;
    let params = ModelParams::default();
    let s = zeta.min(1.0);
    let prune = 10.0;
    if !(zeta > 0.0 && 2.0 * zeta <= t) {
        return Err(Error::Config(format!("need 0 < 2 zeta <= t, got zeta = {zeta}, t = {t}")));
    }
    let mut report = ExperimentReport::new(
        "decoration_comparison",
        json!({ "t": t, "zeta": zeta, "s": s, "replicas": replicas, "prune": prune, "seed": seed, "pool": pool.len(), "ess": pool.ess }),
    );
    if pool.ess < 0.1 * pool.len() as f64 {
        return Err(Error::Diagnostics(format!("backbone pool effective sample size {:.0} is too low", pool.ess)));
    }
    let m_t = front_center(t, c_b)?;
    let emp = replicate(replicas, |i| empirical_q(t, zeta, s, m_t, prune, seed, i))?;
    let half = replicate(replicas, |i| empirical_q(t / 2.0, zeta, s, front_center(t / 2.0, c_b)?, prune, seed ^ 0x4a1f, i))?;

    let cfg = DecorationConfig::default().with_zeta(zeta);
    let lim = replicate(replicas, |i| {
        let mut rng = StreamRng::new(derive_seed(seed, Purpose::Resample, i as u64), Purpose::Resample, 0);
        let bb = pool.resample(&mut rng);
        let path = bb.path(&pool.spec);
        let d = sample_decoration(&path, &params, &cfg, derive_seed(seed, Purpose::Decoration, i as u64))?;
        Ok((d.q.len(), d.q.count(Interval::new(0.0, 1.0)), path.backward_value(params.sigma, s)))
    })?;

    let as_counts = |xs: &[f64]| xs.iter().map(|&x| x as usize).collect::<Vec<_>>();
    let mass: Vec<f64> = emp.iter().map(|e| e.mass).collect();
    let mass_half: Vec<f64> = half.iter().map(|e| e.mass).collect();
    let pre = chi_square_two_sample(&as_counts(&mass), None, &as_counts(&mass_half), None, 5.0)?;
    report.test("stationarity_mass", pre.statistic, Some(pre.p_value));
    report.verdict(
        "stationarity",
        pre.p_value > 0.01,
        "p > 0.01",
        format!("Q({t}, {zeta}) vs Q({}, {zeta}) mass: p = {:.3}", t / 2.0, pre.p_value),
    );

    let lim_mass: Vec<usize> = lim.iter().map(|l| l.0).collect();
    let lim_count: Vec<usize> = lim.iter().map(|l| l.1).collect();
    let a = chi_square_two_sample(&as_counts(&mass), None, &lim_mass, None, 5.0)?;
    let emp_count: Vec<f64> = emp.iter().map(|e| e.count01).collect();
    let b = chi_square_two_sample(&as_counts(&emp_count), None, &lim_count, None, 5.0)?;
    report.test("mass", a.statistic, Some(a.p_value));
    report.test("count_[0,1]", b.statistic, Some(b.p_value));
    report.verdict("mass", a.p_value > 0.01, "p > 0.01", format!("chi-square p = {:.3}", a.p_value));
    report.verdict("count_[0,1]", b.p_value > 0.01, "p > 0.01", format!("chi-square p = {:.3}", b.p_value));

    let y_emp: Vec<f64> = emp.iter().map(|e| e.y_s).collect();
    let y_lim: Vec<f64> = lim.iter().map(|l| l.2).collect();
    let ks = ks_two_sample(&y_emp, &y_lim)?;
    report.test("y_s", ks.statistic, Some(ks.p_value));
    report.verdict("y_s", ks.p_value > 0.01, "p > 0.01", format!("KS Y_t({s}) vs Y({s}): D = {:.4}, p = {:.3}", ks.statistic, ks.p_value));

    let x1: Vec<f64> = emp.iter().map(|e| e.x1_centred).collect();
    let r = pearson(&x1, &mass).unwrap_or(0.0);
    let z = r * (replicas as f64).sqrt();
    report.test("corr_x1_mass", r, None);
    report.verdict("independence", z.abs() < 3.0, "|r| sqrt(n) < 3", format!("r = {r:.4}, z = {z:.2}"));
    let m = MeanSe::of(&mass);
    report.estimate("mass_empirical", m.mean, m.se);
    let lm = MeanSe::of(&lim_mass.iter().map(|&x| x as f64).collect::<Vec<_>>());
    report.estimate("mass_limit", lm.mean, lm.se);
    report.column("mass_empirical", mass);
    report.column("y_empirical", y_emp);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalOptions {
    pub draws: usize,
    pub prune: f64,
    /// Horizon of the rerun when the first p-value lands in `[0.001, 0.01)`.
    pub rerun_t: Option<f64>,
    /// `(α, A)` pairs for the Laplace functionals.
    pub laplace: Vec<(f64, Interval)>,
}

impl Default for ExtremalOptions {
    fn default() -> Self {
        ExtremalOptions {
            draws: 1000,
            prune: 8.0,
            rerun_t: Some(30.0),
            laplace: vec![
                (1.0, Interval::new(-1.0, 1.0)),
                (0.5, Interval::new(-1.0, 0.0)),
                (1.0, Interval::new(0.0, 1.0)),
            ],
        }
    }
}

struct ExtremalRound {
    t: f64,
    counts: Vec<usize>,
    p: f64,
}

/// `N̂(t)` restricted to `window` against `ℒ`: count distributions, Laplace
/// functionals and the correlation of the count with `Z(t)`.
pub fn extremal_comparison(
    ctx: &Context,
    t: f64,
    window: Interval,
    replicas: usize,
    opts: &ExtremalOptions,
    seed: u64,
) -> Result<ExperimentReport> {
    let pool = ctx.pool()?;
    let (c, c_b) = ctx.constants()?;
    let params = ModelParams::default();
    let mut report = ExperimentReport::new(
        "extremal_comparison",
        json!({ "t": t, "window": window, "replicas": replicas, "options": opts, "C": c, "C_B": c_b, "seed": seed }),
    );
    let cfg = DecorationConfig::default();
    let ell = replicate(opts.draws, |i| {
        sample_l(window, Decorations::Pool(pool), &params, &cfg, LimitVariant::L, derive_seed(seed, Purpose::Ppp, i as u64))
    })?;
    let ell_counts: Vec<usize> = ell.iter().map(|l| l.atoms.len()).collect();

    // Z(t) <= 0 happens with vanishing probability; the shift log(C Z(t)) is then undefined and the
    // replica is dropped and counted.
    let empirical = |t: f64, seed: u64| -> Result<(Vec<(PointMeasure, f64, f64)>, usize)> {
        let rows = replicate(replicas, |i| {
            let spec = SimSpec::new(t, derive_seed(seed, Purpose::Replica, i as u64)).with_prune(PruneConfig::window(opts.prune));
            let (snap, _) = simulate(&spec)?;
            let z = derivative_martingale(&snap);
            if !(z > 0.0) {
                return Ok(None);
            }
            let full = recentered_measure(&snap, Recentering::Empirical, c, c_b)?;
            let y1 = full.atoms().first().copied().unwrap_or(f64::NAN);
            Ok(Some((full.restrict(window), z, y1)))
        })?;
        let kept: Vec<_> = rows.into_iter().flatten().collect();
        let dropped = replicas - kept.len();
        if kept.len() * 2 < replicas {
            return Err(Error::Diagnostics(format!("{dropped} of {replicas} replicas have Z(t) <= 0 at t = {t}")));
        }
        Ok((kept, dropped))
    };
    let round = |t: f64, seed: u64| -> Result<(ExtremalRound, Vec<(PointMeasure, f64, f64)>, usize)> {
        let (rows, dropped) = empirical(t, seed)?;
        let counts: Vec<usize> = rows.iter().map(|r| r.0.len()).collect();
        let p = chi_square_two_sample(&counts, None, &ell_counts, None, 5.0)?.p_value;
        Ok((ExtremalRound { t, counts, p }, rows, dropped))
    };

    let (first, rows, dropped) = round(t, seed)?;
    report.test(&format!("chi_square_t{t}"), f64::NAN, Some(first.p));
    report.exact(&format!("dropped_nonpositive_Z_t{t}"), dropped as f64);
    let mut final_round = &first;
    let rerun;
    if (0.001..0.01).contains(&first.p) {
        if let Some(t2) = opts.rerun_t {
            let (r, _, d) = round(t2, seed ^ 0x7e57)?;
            rerun = r;
            report.test(&format!("chi_square_t{t2}"), f64::NAN, Some(rerun.p));
            report.exact(&format!("dropped_nonpositive_Z_t{t2}"), d as f64);
            report.note(format!("p = {:.4} at t = {t} triggered a rerun at t = {t2}: p = {:.4}", first.p, rerun.p));
            final_round = &rerun;
        }
    }
    report.verdict(
        "counts",
        final_round.p > 0.01,
        "chi-square p > 0.01 (rerun at the larger t when p in [0.001, 0.01))",
        format!("t = {}: p = {:.4}", final_round.t, final_round.p),
    );
    // Conditional Gumbel check on the centring alone: the leftmost atom of N̂(t) has mean -γ in the limit.
    let y1 = MeanSe::of(&rows.iter().map(|r| r.2).collect::<Vec<_>>());
    report.estimate("leftmost_mean_empirical", y1.mean, y1.se);
    report.exact("leftmost_mean_limit", -EULER_GAMMA);
    report.test("leftmost_mean_z", (y1.mean + EULER_GAMMA) / y1.se, None);
    let emp_mean = MeanSe::of(&first.counts.iter().map(|&x| x as f64).collect::<Vec<_>>());
    let ell_mean = MeanSe::of(&ell_counts.iter().map(|&x| x as f64).collect::<Vec<_>>());
    report.estimate("count_empirical", emp_mean.mean, emp_mean.se);
    report.estimate("count_limit", ell_mean.mean, ell_mean.se);

    for (alpha, set) in &opts.laplace {
        let a: Vec<f64> = rows.iter().map(|r| r.0.laplace_functional(&[*alpha], &[*set])).collect();
        let b: Vec<f64> = ell.iter().map(|l| l.atoms.laplace_functional(&[*alpha], &[*set])).collect();
        let (ma, mb) = (MeanSe::of(&a), MeanSe::of(&b));
        let z = zscore(ma.mean, ma.se, mb.mean, mb.se);
        let name = format!("laplace_{alpha}_[{},{}]", set.lo, set.hi);
        report.estimate(&format!("{name}_empirical"), ma.mean, ma.se);
        report.estimate(&format!("{name}_limit"), mb.mean, mb.se);
        report.test(&format!("{name}_z"), z, None);
    }
    let zs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let counts: Vec<f64> = first.counts.iter().map(|&x| x as f64).collect();
    if let Ok(r) = pearson(&counts, &zs) {
        report.test("corr_count_Z", r, None);
        report.note(format!("corr(count, Z(t)) = {r:.4}, z = {:.2}", r * (zs.len() as f64).sqrt()));
    }
    report.column("count_empirical", counts);
    report.column("count_limit", ell_counts.iter().map(|&x| x as f64).collect());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_inverse_transform() {
        let p = WaveProfile::from_fn(-10.0, 0.01, 2001, |x| 1.0 / (1.0 + (-x).exp()));
        for u in [0.1, 0.5, 0.9] {
            let x = draw_from_profile(&p, u);
            assert!((x - (u / (1.0 - u)).ln()).abs() < 1e-3);
        }
        assert_eq!(draw_from_profile(&p, 0.0), -10.0);
    }
}
