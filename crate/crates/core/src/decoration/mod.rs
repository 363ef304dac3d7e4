//! Samplers for the limit objects seen from the tip: `Γ^(b)`, the backward
//! path `Y`, the decoration `𝒬`, the exponential Poisson processes `𝒫` and
//! `𝒫′`, and the decorated measures `ℒ` and `ℒ′`.
//!
//! Decorations use fused thinning: candidate births arrive at rate `2λ` along
//! `Y`, each runs an unconditioned BBM from `Y(t)` for time `t`, and it is kept
//! iff its minimum is positive. The keep probability is `1 - G_t(-Y(t))` and a
//! kept run has the conditioned law, so no table lookup is needed to sample.

mod backbone;
mod gamma;
mod weight;

pub use backbone::{pilot_proposal, sample_y, sample_y_with, self_normalized, Backbone, BackbonePool, Proposal, ProposalSpec};
pub use gamma::{first_passage_cdf, sample_gamma, sample_gamma_with, GammaPath};
pub use weight::{continued_weight, path_weight, Continuation, PathWeight, REMAINDER_TOL};

use rand::Rng;
use rand_distr::{Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::engine::{simulate, ModelParams, PruneConfig, SimSpec};
use crate::error::{Error, Result};
use crate::frontstats::{Interval, PointMeasure};
use crate::rng::{derive_seed, Purpose, StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecorationConfig {
    /// Births older than this are not sampled.
    pub zeta_max: f64,
    /// Keep only atoms `<= window` (relative to the tip) and prune sub-runs accordingly.
    pub window: Option<f64>,
    /// Extra pruning room above the window.
    pub margin: f64,
    pub cap: usize,
}

impl Default for DecorationConfig {
    fn default() -> Self {
        DecorationConfig { zeta_max: 8.0, window: None, margin: 4.0, cap: 10_000_000 }
    }
}

impl DecorationConfig {
    pub fn with_zeta(mut self, zeta_max: f64) -> Self {
        self.zeta_max = zeta_max;
        self
    }

    pub fn with_window(mut self, window: f64) -> Self {
        self.window = Some(window);
        self
    }

    fn prune(&self) -> PruneConfig {
        match self.window {
            Some(w) => PruneConfig::window((w + self.margin).max(self.margin)).with_cap(self.cap),
            None => PruneConfig::disabled().with_cap(self.cap),
        }
    }
}

/// A birth candidate along the backward path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub t: f64,
    /// `Y(t)`, the starting point of the candidate's BBM relative to the tip.
    pub start: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecorationSample {
    pub b: f64,
    pub t_b: Option<f64>,
    /// Importance weight of the backbone (1 after resampling).
    pub weight: f64,
    pub candidates: Vec<Candidate>,
    /// Accepted birth times.
    pub births: Vec<f64>,
    /// Relative point measure of each accepted birth.
    pub measures: Vec<PointMeasure>,
    /// `δ_0` plus every accepted measure.
    pub q: PointMeasure,
}

impl DecorationSample {
    /// `𝒬(A)` counting only births no older than `zeta`.
    pub fn count_within(&self, zeta: f64, a: Interval) -> usize {
        let base = usize::from(a.contains(0.0));
        base + self.births.iter().zip(&self.measures).filter(|(t, _)| **t <= zeta).map(|(_, m)| m.count(a)).sum::<usize>()
    }

    /// `𝒬` restricted to births no older than `zeta`.
    pub fn q_within(&self, zeta: f64) -> PointMeasure {
        let mut q = PointMeasure::dirac(0.0);
        for (t, m) in self.births.iter().zip(&self.measures) {
            if *t <= zeta {
                q = q.superpose(m);
            }
        }
        q
    }
}

/// Sample `𝒬` along `Y = -σ Γ^(b)` by fused thinning.
pub fn sample_decoration(path: &GammaPath, params: &ModelParams, cfg: &DecorationConfig, seed: u64) -> Result<DecorationSample> {
    params.validate()?;
    if !(cfg.zeta_max >= 0.0 && cfg.zeta_max.is_finite()) {
        return Err(Error::Config(format!("zeta_max must be finite and nonnegative, got {}", cfg.zeta_max)));
    }
    let reach = *path.times.last().unwrap_or(&0.0);
    if reach + 1e-9 < cfg.zeta_max {
        return Err(Error::Config(format!("backbone covers [0, {reach}] but zeta_max is {}", cfg.zeta_max)));
    }
    let mut rng = StreamRng::new(seed, Purpose::Decoration, 0);
    let mean = 2.0 * params.lambda * cfg.zeta_max;
    let count = if mean > 0.0 { rng.sample(Poisson::new(mean).unwrap()) as usize } else { 0 };
    let mut times: Vec<f64> = (0..count).map(|_| rng.random::<f64>() * cfg.zeta_max).collect();
    times.sort_by(f64::total_cmp);

    let prune = cfg.prune();
    let mut sample = DecorationSample {
        b: path.b,
        t_b: path.t_b,
        weight: 1.0,
        candidates: Vec::with_capacity(count),
        births: Vec::new(),
        measures: Vec::new(),
        q: PointMeasure::dirac(0.0),
    };
    for (j, &t) in times.iter().enumerate() {
        let start = path.backward_value(params.sigma, t);
        let spec = SimSpec::new(t, derive_seed(seed, Purpose::Decoration, j as u64 + 1))
            .with_params(*params)
            .with_prune(prune)
            .starting_at(start);
        let (snap, _) = simulate(&spec)?;
        let min = snap.leftmost().map(|a| a.position).unwrap_or(f64::INFINITY);
        let accepted = min > 0.0;
        sample.candidates.push(Candidate { t, start, accepted });
        if accepted {
            let atoms: Vec<f64> = match cfg.window {
                Some(w) => snap.positions().filter(|&x| x <= w).collect(),
                None => snap.positions().collect(),
            };
            let m = PointMeasure::new(atoms);
            sample.q = sample.q.superpose(&m);
            sample.births.push(t);
            sample.measures.push(m);
        }
    }
    Ok(sample)
}

/// Draw a backbone from the pool by importance resampling and decorate it.
pub fn sample_pool_decoration(pool: &BackbonePool, params: &ModelParams, cfg: &DecorationConfig, seed: u64) -> Result<DecorationSample> {
    let mut rng = StreamRng::new(seed, Purpose::Resample, 0);
    let bb = pool.resample(&mut rng);
    let path = bb.path(&pool.spec);
    sample_decoration(&path, params, cfg, derive_seed(seed, Purpose::Decoration, 0))
}

/// Poisson process with intensity `e^x dx` on `(-∞, a]`, sorted.
pub fn sample_ppp(a: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = StreamRng::new(seed, Purpose::Ppp, 0);
    sample_ppp_with(a, &mut rng)
}

pub fn sample_ppp_with(a: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if !a.is_finite() || a > 30.0 {
        return Err(Error::Domain(format!("cutoff {a} must be finite and at most 30")));
    }
    let n = rng.sample(Poisson::new(a.exp()).unwrap()) as usize;
    let mut xs: Vec<f64> = (0..n).map(|_| a + (1.0 - rng.random::<f64>()).ln()).collect();
    xs.sort_by(f64::total_cmp);
    Ok(xs)
}

/// `𝒫′` restricted to `[0, cutoff]`: an atom at 0 plus a Poisson process of
/// intensity `e · e^x` on `[0, cutoff]` with `e` standard exponential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PppPrime {
    pub e: f64,
    pub atoms: Vec<f64>,
}

pub fn sample_ppp_prime(cutoff: f64, seed: u64) -> Result<PppPrime> {
    let mut rng = StreamRng::new(seed, Purpose::Ppp, 1);
    sample_ppp_prime_with(cutoff, &mut rng)
}

pub fn sample_ppp_prime_with(cutoff: f64, rng: &mut impl Rng) -> Result<PppPrime> {
    if !(cutoff >= 0.0 && cutoff <= 30.0) {
        return Err(Error::Domain(format!("cutoff {cutoff} must lie in [0, 30]")));
    }
    let e: f64 = rng.sample(Exp1);
    let mass = e * cutoff.exp_m1();
    let n = if mass > 0.0 { rng.sample(Poisson::new(mass).unwrap()) as usize } else { 0 };
    let mut atoms = Vec::with_capacity(n + 1);
    atoms.push(0.0);
    for _ in 0..n {
        atoms.push((rng.random::<f64>() * cutoff.exp_m1()).ln_1p());
    }
    atoms.sort_by(f64::total_cmp);
    Ok(PppPrime { e, atoms })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitVariant {
    /// `ℒ`, built on `𝒫`.
    L,
    /// `ℒ′`, built on `𝒫′`.
    LPrime,
}

impl std::str::FromStr for LimitVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "l" => Ok(LimitVariant::L),
            "L'" | "Lprime" | "lprime" | "L-prime" => Ok(LimitVariant::LPrime),
            _ => Err(Error::Config(format!("unknown limit variant {s:?}"))),
        }
    }
}

/// Where decorations come from.
#[derive(Clone, Copy, Debug)]
pub enum Decorations<'a> {
    /// Every decoration is `δ_0`.
    Stub,
    Pool(&'a BackbonePool),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoratedAtom {
    pub x: f64,
    pub b: Option<f64>,
    /// Relative decoration atoms that can reach the window.
    pub q: PointMeasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitMeasureSample {
    pub variant: LimitVariant,
    pub window: Interval,
    /// Atoms of the underlying Poisson process that can reach the window.
    pub ppp: Vec<f64>,
    /// The exponential mixing variable of `𝒫′`.
    pub e: Option<f64>,
    pub decorations: Vec<DecoratedAtom>,
    /// The decorated measure restricted to the window.
    pub atoms: PointMeasure,
    /// Backbones are drawn by importance resampling, so draws are unweighted.
    pub weight: f64,
}

impl LimitMeasureSample {
    /// The Poisson process restricted to the window.
    pub fn ppp_in_window(&self) -> PointMeasure {
        PointMeasure::new(self.ppp.clone()).restrict(self.window)
    }
}

/// One draw of `ℒ` (or `ℒ′`) restricted to `window`.
pub fn sample_l(
    window: Interval,
    decorations: Decorations<'_>,
    params: &ModelParams,
    cfg: &DecorationConfig,
    variant: LimitVariant,
    seed: u64,
) -> Result<LimitMeasureSample> {
    if !(window.lo <= window.hi) || !window.hi.is_finite() {
        return Err(Error::Config(format!("bad window [{}, {}]", window.lo, window.hi)));
    }
    let mut rng = StreamRng::new(seed, Purpose::Ppp, 2);
    let (ppp, e) = match variant {
        LimitVariant::L => (sample_ppp_with(window.hi, &mut rng)?, None),
        LimitVariant::LPrime => {
            let p = sample_ppp_prime_with(window.hi.max(0.0), &mut rng)?;
            let atoms = p.atoms.into_iter().filter(|&x| x <= window.hi).collect();
            (atoms, Some(p.e))
        }
    };
    let mut all = Vec::new();
    let mut decorated = Vec::with_capacity(ppp.len());
    for (i, &x) in ppp.iter().enumerate() {
        let (b, q) = match decorations {
            Decorations::Stub => (None, PointMeasure::dirac(0.0)),
            Decorations::Pool(pool) => {
                let cfg = DecorationConfig { window: Some(window.hi - x), ..cfg.clone() };
                let d = sample_pool_decoration(pool, params, &cfg, derive_seed(seed, Purpose::Decoration, i as u64))?;
                (Some(d.b), d.q)
            }
        };
        all.extend(q.atoms().iter().map(|y| x + y).filter(|&z| window.contains(z)));
        decorated.push(DecoratedAtom { x, b, q });
    }
    Ok(LimitMeasureSample {
        variant,
        window,
        ppp,
        e,
        decorations: decorated,
        atoms: PointMeasure::new(all),
        weight: 1.0,
    })
}
