use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{continued_weight, path_weight, sample_gamma_with, Continuation, GammaPath, PathWeight, REMAINDER_TOL};
use crate::error::{Error, Result};
use crate::fkpp::FkppTable;
use crate::rng::{Purpose, StreamRng};
use crate::stats::{effective_sample_size, MeanSe};

/// How backbones are drawn: a piecewise-constant proposal for `b` fitted to a pilot run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProposalSpec {
    pub b_max: f64,
    pub bins: usize,
    pub pilot_per_bin: usize,
    /// Grid step of the `Γ^(b)` paths.
    pub dt: f64,
    /// Path horizon `H`.
    pub horizon: f64,
    /// Floor of each bin's mass relative to the heaviest bin.
    pub floor: f64,
    pub remainder_tol: f64,
    /// Continue each path past the horizon; `None` keeps the truncated weight.
    pub continuation: Option<Continuation>,
}

impl Default for ProposalSpec {
    fn default() -> Self {
        ProposalSpec {
            b_max: 8.0,
            bins: 16,
            pilot_per_bin: 32,
            dt: 0.01,
            horizon: 30.0,
            floor: 0.02,
            remainder_tol: REMAINDER_TOL,
            continuation: Some(Continuation::default()),
        }
    }
}

impl ProposalSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.b_max > 0.0 && self.bins > 0 && self.pilot_per_bin > 0) {
            return Err(Error::Config("proposal needs b_max > 0 and at least one bin and pilot draw".into()));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config("proposal path grid needs dt > 0 and a finite horizon".into()));
        }
        if !(0.0..1.0).contains(&self.floor) || self.floor == 0.0 {
            return Err(Error::Config("proposal floor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Piecewise-constant density on `(0, b_max]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub b_max: f64,
    /// Probability mass of each bin.
    pub mass: Vec<f64>,
    /// Pilot estimates of `E[weight]` per bin.
    pub pilot: Vec<f64>,
}

impl Proposal {
    pub fn uniform(b_max: f64, bins: usize) -> Self {
        Proposal { b_max, mass: vec![1.0 / bins as f64; bins], pilot: vec![1.0; bins] }
    }

    fn width(&self) -> f64 {
        self.b_max / self.mass.len() as f64
    }

    pub fn density(&self, b: f64) -> f64 {
        if !(b > 0.0 && b <= self.b_max) {
            return 0.0;
        }
        let k = ((b / self.width()) as usize).min(self.mass.len() - 1);
        self.mass[k] / self.width()
    }

    pub fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.mass.len() - 1;
        for (i, m) in self.mass.iter().enumerate() {
            acc += m;
            if u < acc {
                k = i;
                break;
            }
        }
        // Strictly positive b.
        let v: f64 = 1.0 - rng.random::<f64>();
        (k as f64 + v) * self.width()
    }
}

/// One weighted backbone. The path is not stored: it is regenerated from `path_seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub index: usize,
    pub b: f64,
    pub path_seed: u64,
    pub t_b: Option<f64>,
    pub weight: PathWeight,
    /// `weight / q(b)`.
    pub importance: f64,
}

impl Backbone {
    pub fn path(&self, spec: &ProposalSpec) -> GammaPath {
        let mut rng = StreamRng::new(self.path_seed, Purpose::Gamma, 0);
        sample_gamma_with(self.b, spec.dt, spec.horizon, &mut rng).expect("validated backbone")
    }
}

/// The weighted backbones of one `sample_y` call.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BackbonePool {
    pub spec: ProposalSpec,
    pub proposal: Proposal,
    pub backbones: Vec<Backbone>,
    /// `c1 = ∫_0^{b_max} E[weight] db` with its standard error.
    pub c1: MeanSe,
    pub ess: f64,
    /// Backbones whose Brownian phase outlasted the horizon or whose remainder was flagged.
    pub incomplete: usize,
    pub flagged: usize,
    cumulative: Vec<f64>,
}

fn draw_backbone(b: f64, path_seed: u64, spec: &ProposalSpec, table: &FkppTable) -> Result<(Option<f64>, PathWeight)> {
    let mut rng = StreamRng::new(path_seed, Purpose::Gamma, 0);
    let path = sample_gamma_with(b, spec.dt, spec.horizon, &mut rng)?;
    let w = match &spec.continuation {
        Some(c) => continued_weight(&path, table, c, &mut StreamRng::new(path_seed, Purpose::Gamma, 1))?,
        None => path_weight(&path, table, spec.remainder_tol)?,
    };
    Ok((path.t_b, w))
}

/// Pilot estimate of `E[weight]` on each proposal bin.
pub fn pilot_proposal(table: &FkppTable, spec: &ProposalSpec, seed: u64) -> Result<Proposal> {
    spec.validate()?;
    let width = spec.b_max / spec.bins as f64;
    let pilot: Vec<f64> = (0..spec.bins)
        .into_par_iter()
        .map(|k| {
            let mut acc = 0.0;
            for j in 0..spec.pilot_per_bin {
                let mut rng = StreamRng::new(seed, Purpose::Pilot, (k * spec.pilot_per_bin + j) as u64);
                let b = (k as f64 + 1.0 - rng.random::<f64>()) * width;
                let (_, w) = draw_backbone(b, rng.random(), spec, table)?;
                acc += w.weight;
            }
            Ok(acc / spec.pilot_per_bin as f64)
        })
        .collect::<Result<_>>()?;
    let top = pilot.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::Diagnostics("pilot weights are all zero".into()));
    }
    let raw: Vec<f64> = pilot.iter().map(|&m| m.max(spec.floor * top)).collect();
    let total: f64 = raw.iter().sum();
    Ok(Proposal { b_max: spec.b_max, mass: raw.iter().map(|m| m / total).collect(), pilot })
}

/// Importance sampling of the backward path law: `n` backbones with `b` drawn
/// from a pilot-fitted proposal.
pub fn sample_y(table: &FkppTable, spec: &ProposalSpec, n: usize, seed: u64) -> Result<BackbonePool> {
    let proposal = pilot_proposal(table, spec, seed)?;
    sample_y_with(table, spec, proposal, n, seed)
}

pub fn sample_y_with(table: &FkppTable, spec: &ProposalSpec, proposal: Proposal, n: usize, seed: u64) -> Result<BackbonePool> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::Config("sample_y needs at least two draws".into()));
    }
    let backbones: Vec<Backbone> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::new(seed, Purpose::Proposal, i as u64);
            let b = proposal.draw(&mut rng);
            let path_seed: u64 = rng.random();
            let (t_b, weight) = draw_backbone(b, path_seed, spec, table)?;
            let importance = weight.weight / proposal.density(b);
            Ok(Backbone { index: i, b, path_seed, t_b, weight, importance })
        })
        .collect::<Result<_>>()?;
    let imp: Vec<f64> = backbones.iter().map(|b| b.importance).collect();
    let ess = effective_sample_size(&imp);
    if ess < 0.1 * n as f64 {
        return Err(Error::Diagnostics(format!(
            "effective sample size {ess:.1} is below 10% of {n}; use more proposal bins or a larger pilot"
        )));
    }
    let c1 = MeanSe::of(&imp);
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for w in &imp {
        acc += w;
        cumulative.push(acc);
    }
    let incomplete = backbones.iter().filter(|b| b.t_b.is_none()).count();
    let flagged = backbones.iter().filter(|b| b.weight.flagged).count();
    Ok(BackbonePool { spec: spec.clone(), proposal, backbones, c1, ess, incomplete, flagged, cumulative })
}

impl BackbonePool {
    pub fn len(&self) -> usize {
        self.backbones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backbones.is_empty()
    }

    pub fn importance(&self) -> Vec<f64> {
        self.backbones.iter().map(|b| b.importance).collect()
    }

    /// Draw a backbone with probability proportional to its importance weight.
    pub fn resample(&self, rng: &mut impl Rng) -> &Backbone {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u).min(self.len() - 1);
        &self.backbones[i]
    }

    /// Self-normalised expectation of `f(backbone)`.
    pub fn expectation(&self, f: impl Fn(&Backbone) -> f64) -> f64 {
        self_normalized(&self.backbones.iter().map(f).collect::<Vec<_>>(), &self.importance())
    }
}

/// `Σ w_i x_i / Σ w_i`.
pub fn self_normalized(xs: &[f64], weights: &[f64]) -> f64 {
    let w: f64 = weights.iter().sum();
    xs.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() / w
}
