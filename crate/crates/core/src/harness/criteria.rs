//! The acceptance criteria as runnable experiments, grouped into suites.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::identities::{bramson_centering, many_to_one_check, pde_crosscheck, spinal_identity_check, tail_constant_check, SpinalFunctional};
use super::limits::{decoration_comparison, extremal_comparison, genealogy_gap, record_poissonization, ExtremalOptions};
use super::samplers::{gamma_first_passage, laplace_ratio_check, thinning_check, LaplaceOptions};
use super::{Context, ExperimentReport};
use crate::decoration::{sample_decoration, sample_gamma, sample_l, sample_ppp, DecorationConfig, Decorations, LimitVariant};
use crate::engine::{simulate, ModelParams, PruneConfig, SimSpec};
use crate::error::{Error, Result};
use crate::frontstats::{recentered_measure, Interval, Recentering};
use crate::genealogy::{decoration_window, leftmost_decomposition};
use crate::rng::{derive_seed, Purpose};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Suite {
    /// Exact finite-time identities (criteria 1 and 5).
    Identities,
    /// The F-KPP solver against simulation and its own asymptotics (2, 3, 4).
    Pde,
    /// Limit-object samplers (6, 7, 11).
    Samplers,
    /// Limit theorems at finite scale (8, 9, 10).
    Limits,
    /// Exact properties and degenerate cases (12).
    Properties,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identities" => Ok(Suite::Identities),
            "pde" => Ok(Suite::Pde),
            "samplers" => Ok(Suite::Samplers),
            "limits" => Ok(Suite::Limits),
            "properties" => Ok(Suite::Properties),
            "all" => Ok(Suite::All),
            _ => Err(Error::Config(format!(
                "unknown suite {s:?} (identities, pde, samplers, limits, properties, all)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub suite: Suite,
    /// Verdicts of the experiment report that decide the criterion; empty means all.
    pub verdicts: &'static [&'static str],
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "martingale identities", suite: Suite::Identities, verdicts: &["M_t", "Z_t"] },
    Criterion { id: 2, name: "PDE against simulation", suite: Suite::Pde, verdicts: &[] },
    Criterion { id: 3, name: "centering settles", suite: Suite::Pde, verdicts: &[] },
    Criterion { id: 4, name: "tail constant", suite: Suite::Pde, verdicts: &[] },
    Criterion { id: 5, name: "spinal identity", suite: Suite::Identities, verdicts: &[] },
    Criterion { id: 6, name: "first passage of the backbone", suite: Suite::Samplers, verdicts: &["ks", "sup"] },
    Criterion { id: 7, name: "thinning acceptance", suite: Suite::Samplers, verdicts: &[] },
    Criterion { id: 8, name: "record Poissonization", suite: Suite::Limits, verdicts: &[] },
    Criterion { id: 9, name: "genealogy dichotomy", suite: Suite::Limits, verdicts: &["monotone", "small_at_max"] },
    Criterion { id: 10, name: "extremal measure", suite: Suite::Limits, verdicts: &["counts"] },
    Criterion { id: 11, name: "Laplace ratio", suite: Suite::Samplers, verdicts: &[] },
    Criterion { id: 12, name: "property suite", suite: Suite::Properties, verdicts: &[] },
];

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub passed: bool,
    pub report: ExperimentReport,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let details: Vec<String> = self
            .report
            .verdicts
            .iter()
            .filter(|v| self.criterion.verdicts.is_empty() || self.criterion.verdicts.contains(&v.name.as_str()))
            .map(|v| format!("{}: {} [{}]", v.name, v.detail, v.tolerance))
            .collect();
        format!(
            "criterion {:>2} {} ({}): {}",
            self.criterion.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion.name,
            details.join("; ")
        )
    }
}

fn scaled(ctx: &Context, n: usize) -> usize {
    ((n as f64 * ctx.scale).round() as usize).max(50)
}

/// Runs one criterion at its declared size (times `ctx.scale`).
pub fn run_criterion(id: u8, ctx: &Context) -> Result<CriterionResult> {
    let criterion = *CRITERIA
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::Config(format!("no criterion {id} (1 to 12)")))?;
    let seed = derive_seed(ctx.seed, Purpose::Replica, 1000 + u64::from(id));
    let report = match id {
        1 => many_to_one_check(3.0, scaled(ctx, 10_000), seed)?,
        2 => pde_crosscheck(ctx.table()?, 3.0, scaled(ctx, 10_000), seed)?,
        3 => bramson_centering(&ctx.wave()?.0)?,
        4 => tail_constant_check(&ctx.wave()?.1)?,
        5 => spinal_identity_check(ctx.table()?, 2.0, &SpinalFunctional::default(), scaled(ctx, 100_000), seed)?,
        6 => gamma_first_passage(1.0, 1e-3, 10.0, scaled(ctx, 10_000), seed)?,
        7 => thinning_check(ctx, scaled(ctx, 10_000), 5, seed)?,
        8 => record_poissonization(10.0, scaled(ctx, 1000), &ctx.wave()?.1, seed)?,
        9 => genealogy_gap(20.0, 2.0, &[1.0, 2.0, 4.0], scaled(ctx, 1000), 10.0, ctx.constants()?.1, seed)?,
        10 => {
            let opts = ExtremalOptions { draws: scaled(ctx, 1000), ..ExtremalOptions::default() };
            extremal_comparison(ctx, 20.0, Interval::new(-1.0, 1.0), scaled(ctx, 1000), &opts, seed)?
        }
        11 => {
            let opts = LaplaceOptions { draws: scaled(ctx, 10_000), ..LaplaceOptions::default() };
            laplace_ratio_check(ctx, &opts, seed)?
        }
        12 => property_checks(ctx, seed)?,
        _ => unreachable!(),
    };
    let passed = report
        .verdicts
        .iter()
        .filter(|v| criterion.verdicts.is_empty() || criterion.verdicts.contains(&v.name.as_str()))
        .all(|v| v.passed);
    Ok(CriterionResult { criterion, passed, report })
}

/// Every criterion of `suite`, in order.
pub fn run_suite(suite: Suite, ctx: &Context) -> Result<Vec<CriterionResult>> {
    CRITERIA
        .iter()
        .filter(|c| suite == Suite::All || c.suite == suite)
        .map(|c| run_criterion(c.id, ctx))
        .collect()
}

/// Determinism, partition, minimum atom, Poisson void probabilities and the
/// degenerate cases of the identities, each checked exactly or at a fixed seed.
pub fn property_checks(ctx: &Context, seed: u64) -> Result<ExperimentReport> {
    let params = ModelParams::default();
    let mut report = ExperimentReport::new("properties", json!({ "seed": seed }));

    let spec = SimSpec::new(5.0, seed).with_prune(PruneConfig::window(6.0)).with_uniform_checkpoints(0.5);
    let a = simulate(&spec)?;
    let b = simulate(&spec)?;
    report.verdict("determinism", a.0 == b.0 && a.1.nodes() == b.1.nodes(), "exact", "two runs of one spec".into());

    let mut partition = true;
    let mut min_atom = true;
    let mut q_zero = true;
    for i in 0..20 {
        let (snap, arena) = simulate(&SimSpec::new(4.0, derive_seed(seed, Purpose::Replica, i)))?;
        let d = leftmost_decomposition(&arena, &snap)?;
        partition &= d.relatives() + 1 == snap.len();
        let m = recentered_measure(&snap, Recentering::Leftmost, 1.0, 0.0)?;
        min_atom &= m.min() == Some(0.0);
        q_zero &= decoration_window(&d, 0.0)?.atoms() == [0.0];
    }
    report.verdict("partition", partition, "exact", "relatives plus the tip make up the population".into());
    report.verdict("min_atom", min_atom, "exact", "N(t) - X_1(t) has its minimum at 0".into());
    report.verdict("q_at_zero", q_zero, "exact", "Q(t, 0) = δ_0".into());

    let m2o = many_to_one_check(0.0, 20, seed)?;
    report.verdict("many_to_one_t0", m2o.passed(), "exact", "single particle at t = 0".into());

    let table = ctx.table()?;
    let monotone = table
        .slices
        .iter()
        .all(|s| s.values.windows(2).all(|w| w[1] >= w[0]) && s.values.iter().all(|v| (0.0..=1.0).contains(v)));
    report.verdict("table_monotone", monotone, "exact", "every slice is a distribution function".into());

    let mut sup_ok = true;
    for i in 0..50 {
        let p = sample_gamma(1.0, 0.01, 10.0, derive_seed(seed, Purpose::Gamma, i))?;
        sup_ok &= if p.t_b.is_some() { p.sup() == 1.0 } else { p.sup() < 1.0 };
    }
    report.verdict("gamma_sup", sup_ok, "exact", "sup Γ = b once T_b is reached".into());

    // Void probabilities of PPP(e^x dx): P(no atom <= x) = exp(-e^x).
    let n = 4000;
    let draws: Vec<Vec<f64>> = (0..n).map(|i| sample_ppp(1.0, derive_seed(seed, Purpose::Ppp, i))).collect::<Result<_>>()?;
    let mut void_ok = true;
    for x in [-1.0f64, 0.0, 0.5] {
        let p = (-x.exp()).exp();
        let f = draws.iter().filter(|d| d.first().is_none_or(|&m| m > x)).count() as f64 / n as f64;
        let z = (f - p) / (p * (1.0 - p) / n as f64).sqrt();
        report.test(&format!("void_{x}"), z, None);
        void_ok &= z.abs() < 4.0;
    }
    report.verdict("ppp_void", void_ok, "|z| < 4 at three levels", "PPP(e^x dx) void probabilities".into());

    let mut prime_ok = true;
    for i in 0..20 {
        let l = sample_l(Interval::new(-1.0, 1.0), Decorations::Stub, &params, &DecorationConfig::default(), LimitVariant::LPrime, derive_seed(seed, Purpose::Ppp, 100 + i))?;
        prime_ok &= l.atoms.atoms().contains(&0.0);
    }
    report.verdict("l_prime_atom", prime_ok, "exact", "ℒ′ has an atom at 0".into());

    let pool = ctx.pool()?;
    let path = pool.backbones[0].path(&pool.spec);
    let d = sample_decoration(&path, &params, &DecorationConfig::default().with_zeta(2.0), seed)?;
    report.verdict("sampler_q_at_zero", d.q_within(0.0).atoms() == [0.0] && d.q.atoms().contains(&0.0), "exact", "𝒬 contains 0".into());

    let gap = genealogy_gap(6.0, 2.0, &[0.0, 3.0], 30, 8.0, ctx.constants()?.1, seed)?;
    let sizes = gap.raw.iter().find(|c| c.0 == "J_size").map(|c| c.1.clone()).unwrap_or_default();
    let with_pair = sizes.iter().filter(|&&s| s >= 2.0).count() as f64 / sizes.len() as f64;
    let p0 = gap.get("P(zeta=0)").map_or(f64::NAN, |e| e.value);
    let p_half = gap.get("P(zeta=3)").map_or(f64::NAN, |e| e.value);
    report.verdict(
        "genealogy_degenerate",
        p0 == with_pair && p_half == 0.0,
        "exact",
        format!("zeta = 0 gives {p0:.4} (pairs in {with_pair:.4}), zeta = t/2 gives {p_half}"),
    );

    let opts = LaplaceOptions { alphas: vec![0.0], draws: 200, ..LaplaceOptions::default() };
    let lr = laplace_ratio_check(ctx, &opts, seed)?;
    let direct = lr.get("direct").map_or(f64::NAN, |e| e.value);
    let ratio = lr.get("ratio").map_or(f64::NAN, |e| e.value);
    report.verdict("laplace_alpha_zero", direct == 1.0 && ratio == 1.0, "exact", format!("direct {direct}, ratio {ratio}"));
    Ok(report)
}

/// A smaller run of the decoration comparison, not one of the numbered criteria.
pub fn decoration_report(ctx: &Context, seed: u64) -> Result<ExperimentReport> {
    decoration_comparison(ctx, 20.0, 1.0, scaled(ctx, 1000), seed)
}
