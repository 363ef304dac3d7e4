//! Exact event-driven simulation of binary branching Brownian motion.
//!
//! Particles move as Brownian motion with drift `rho` and diffusion `sigma`,
//! and split in two at rate `lambda`. The run advances through a sequence of
//! synchronisation times (the checkpoint grid, the horizon and, when pruning is
//! on, a regular pruning grid). Between two synchronisation times each particle
//! is advanced independently with exact exponential clocks and exact Gaussian
//! increments, so no time discretisation enters the dynamics.

mod arena;
mod snapshot;
mod stopping;

pub use arena::{EventKind, LineageArena, Node, NodeId};
pub use snapshot::{Atom, PopulationSnapshot};
pub use stopping::{
    arena_stopping_line, stopping_line, stopping_line_from, stopping_line_with_floor, Hit, StoppingLineResult,
};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;
use crate::rng::{Purpose, StreamRng};

/// Branching rate, drift and diffusion coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl Default for ModelParams {
    /// `lambda = 1, rho = 2, sigma = sqrt 2`.
    fn default() -> Self {
        ModelParams { lambda: 1.0, rho: 2.0, sigma: std::f64::consts::SQRT_2 }
    }
}

impl ModelParams {
    /// Validated constructor. The two criticality relations
    /// `rho = lambda + sigma^2 / 2` and `rho = sigma^2` must hold.
    pub fn new(lambda: f64, rho: f64, sigma: f64) -> Result<Self> {
        let p = ModelParams { lambda, rho, sigma };
        p.validate()?;
        Ok(p)
    }

    /// The critical parameters for branching rate `lambda`.
    pub fn critical(lambda: f64) -> Result<Self> {
        Self::new(lambda, 2.0 * lambda, (2.0 * lambda).sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("rho", self.rho), ("sigma", self.sigma)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if !self.is_critical() {
            return Err(Error::Config(format!(
                "parameters are not critical: need rho = lambda + sigma^2/2 = sigma^2, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn is_critical(&self) -> bool {
        let s2 = self.sigma * self.sigma;
        let tol = 1e-12 * self.rho.abs().max(1.0);
        (self.rho - (self.lambda + s2 / 2.0)).abs() <= tol && (self.rho - s2).abs() <= tol
    }

    /// Diffusion constant `sigma^2 / 2` of the generator.
    pub fn diffusion(&self) -> f64 {
        0.5 * self.sigma * self.sigma
    }
}

/// Front-window pruning: at branch events and at synchronisation times,
/// particles above `reference minimum + window` are discarded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    pub enabled: bool,
    pub window: f64,
    /// Hard bound on the live-particle count; exceeding it aborts the run.
    pub cap: usize,
    /// Spacing of the extra synchronisation grid used while pruning.
    pub sync_interval: f64,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { enabled: false, window: 10.0, cap: 10_000_000, sync_interval: 0.5 }
    }
}

impl PruneConfig {
    pub fn disabled() -> Self {
        Self::default()
    }

    pub fn window(window: f64) -> Self {
        PruneConfig { enabled: true, window, ..Self::default() }
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled && !(self.window > 0.0 && self.window.is_finite()) {
            return Err(Error::Config(format!("prune window must be positive, got {}", self.window)));
        }
        if self.enabled && !(self.sync_interval > 0.0) {
            return Err(Error::Config("prune sync interval must be positive".into()));
        }
        if self.cap == 0 {
            return Err(Error::Config("cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything that determines one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub params: ModelParams,
    pub horizon: f64,
    pub seed: u64,
    pub prune: PruneConfig,
    /// Increasing times in `[0, horizon]` at which every live lineage is recorded.
    pub checkpoints: Vec<f64>,
    /// Starting position of the root particle.
    pub origin: f64,
    /// Test switch: when false the root never branches.
    pub branching: bool,
}

impl SimSpec {
    pub fn new(horizon: f64, seed: u64) -> Self {
        SimSpec {
            params: ModelParams::default(),
            horizon,
            seed,
            prune: PruneConfig::default(),
            checkpoints: Vec::new(),
            origin: 0.0,
            branching: true,
        }
    }

    pub fn with_params(mut self, params: ModelParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_prune(mut self, prune: PruneConfig) -> Self {
        self.prune = prune;
        self
    }

    pub fn with_checkpoints(mut self, grid: Vec<f64>) -> Self {
        self.checkpoints = grid;
        self
    }

    /// Checkpoints every `step` from 0 up to the horizon (inclusive when it falls on the grid).
    pub fn with_uniform_checkpoints(self, step: f64) -> Self {
        let grid = uniform_grid(self.horizon, step);
        self.with_checkpoints(grid)
    }

    pub fn starting_at(mut self, origin: f64) -> Self {
        self.origin = origin;
        self
    }

    pub fn without_branching(mut self) -> Self {
        self.branching = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.prune.validate()?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be finite and nonnegative, got {}", self.horizon)));
        }
        if !self.origin.is_finite() {
            return Err(Error::Config("origin must be finite".into()));
        }
        for w in self.checkpoints.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Config("checkpoint grid must be strictly increasing".into()));
            }
        }
        if let (Some(&first), Some(&last)) = (self.checkpoints.first(), self.checkpoints.last()) {
            if first < 0.0 || last > self.horizon + arena::TIME_TOL {
                return Err(Error::Config(format!(
                    "checkpoint grid [{first}, {last}] is not inside [0, {}]",
                    self.horizon
                )));
            }
        }
        Ok(())
    }
}

/// `0, step, 2 step, ...` up to `horizon`, with the horizon appended when it is within rounding of the grid.
pub fn uniform_grid(horizon: f64, step: f64) -> Vec<f64> {
    let n = (horizon / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    if let Some(last) = grid.last_mut() {
        if (horizon - *last).abs() < 1e-9 * step.max(1.0) {
            *last = horizon;
        }
    }
    grid
}

#[derive(Clone, Copy)]
struct Live {
    node: NodeId,
    time: f64,
    pos: f64,
}

struct SyncPoint {
    time: f64,
    checkpoint: Option<u32>,
}

fn sync_points(spec: &SimSpec) -> Vec<SyncPoint> {
    let mut times: Vec<(f64, Option<u32>)> = spec
        .checkpoints
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > arena::TIME_TOL)
        .map(|(i, &s)| (s.min(spec.horizon), Some(i as u32)))
        .collect();
    if spec.prune.enabled {
        let mut s = spec.prune.sync_interval;
        while s < spec.horizon - arena::TIME_TOL {
            times.push((s, None));
            s += spec.prune.sync_interval;
        }
    }
    times.push((spec.horizon, None));
    times.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.is_some().cmp(&a.1.is_some())));
    let mut out: Vec<SyncPoint> = Vec::with_capacity(times.len());
    for (t, cp) in times {
        match out.last_mut() {
            Some(last) if (t - last.time).abs() <= arena::TIME_TOL => {
                if last.checkpoint.is_none() {
                    last.checkpoint = cp;
                }
            }
            _ => out.push(SyncPoint { time: t, checkpoint: cp }),
        }
    }
    out
}

/// Runs one realisation up to `spec.horizon`.
///
/// Identical specs give bit-identical results: every draw comes from a stream
/// keyed by `(seed, node id, synchronisation slab)`.
pub fn simulate(spec: &SimSpec) -> Result<(PopulationSnapshot, LineageArena)> {
    spec.validate()?;
    let p = spec.params;
    let base = StreamRng::new(spec.seed, Purpose::Engine, 0);
    let mut arena = LineageArena::with_grid(spec.checkpoints.clone());
    let mut samples: Vec<(u32, u32, f64)> = Vec::new();

    let root = arena.push(Node {
        parent: None,
        birth_time: 0.0,
        birth_pos: spec.origin,
        event_time: f64::NAN,
        event_pos: f64::NAN,
        kind: EventKind::Horizon,
        first_child: None,
    });
    if spec.checkpoints.first().is_some_and(|&s| s <= arena::TIME_TOL) {
        samples.push((root.0, 0, spec.origin));
    }

    let mut live = vec![Live { node: root, time: 0.0, pos: spec.origin }];
    let mut leaves: Vec<Atom> = Vec::new();
    let mut live_count: usize = 1;
    let mut pruned_m = CompensatedSum::new();
    let mut pruned_z = CompensatedSum::new();
    let mut pruned_any = false;
    let mut reference = spec.origin;
    let prune = spec.prune;

    let mark_pruned = |x: f64, m: &mut CompensatedSum, z: &mut CompensatedSum| {
        let e = (-x).exp();
        m.add(e);
        z.add(x * e);
    };

    if spec.horizon <= 0.0 {
        let n = arena.node_mut(root);
        n.event_time = 0.0;
        n.event_pos = spec.origin;
        arena.set_checkpoints(samples);
        let snap = PopulationSnapshot::from_unsorted(0.0, vec![Atom { position: spec.origin, node: root }]);
        return Ok((snap, arena));
    }

    for (slab, sync) in sync_points(spec).into_iter().enumerate() {
        let end = sync.time;
        let at_horizon = (end - spec.horizon).abs() <= arena::TIME_TOL;
        let mut stack: Vec<Live> = std::mem::take(&mut live);
        stack.reverse();
        let mut running_ref = reference;
        while let Some(cur) = stack.pop() {
            let mut rng = base.fork(cur.node.0 as u64).fork(slab as u64);
            let remaining = end - cur.time;
            let life = if spec.branching { rng.sample::<f64, _>(Exp1) / p.lambda } else { f64::INFINITY };
            if life < remaining {
                let pos = cur.pos + p.rho * life + p.sigma * life.sqrt() * rng.sample::<f64, _>(StandardNormal);
                if !pos.is_finite() {
                    return Err(Error::Numeric(format!("non-finite position at node {}", cur.node)));
                }
                let time = cur.time + life;
                running_ref = running_ref.min(pos);
                let first_child = NodeId(arena.len() as u32);
                let n = arena.node_mut(cur.node);
                n.event_time = time;
                n.event_pos = pos;
                if prune.enabled && pos > running_ref + prune.window {
                    n.kind = EventKind::Pruned;
                    live_count -= 1;
                    pruned_any = true;
                    mark_pruned(pos, &mut pruned_m, &mut pruned_z);
                    continue;
                }
                n.kind = EventKind::Branch;
                n.first_child = Some(first_child);
                for _ in 0..2 {
                    let c = arena.push(Node {
                        parent: Some(cur.node),
                        birth_time: time,
                        birth_pos: pos,
                        event_time: f64::NAN,
                        event_pos: f64::NAN,
                        kind: EventKind::Horizon,
                        first_child: None,
                    });
                    stack.push(Live { node: c, time, pos });
                }
                let top = stack.len() - 1;
                stack.swap(top, top - 1);
                live_count += 1;
                if live_count > prune.cap {
                    return Err(Error::Resource { live: live_count, cap: prune.cap });
                }
            } else {
                let h = remaining;
                let pos = cur.pos + p.rho * h + p.sigma * h.sqrt() * rng.sample::<f64, _>(StandardNormal);
                if !pos.is_finite() {
                    return Err(Error::Numeric(format!("non-finite position at node {}", cur.node)));
                }
                if let Some(g) = sync.checkpoint {
                    samples.push((cur.node.0, g, pos));
                }
                if at_horizon {
                    let n = arena.node_mut(cur.node);
                    n.event_time = spec.horizon;
                    n.event_pos = pos;
                    n.kind = EventKind::Horizon;
                    leaves.push(Atom { position: pos, node: cur.node });
                } else {
                    live.push(Live { node: cur.node, time: end, pos });
                }
            }
        }
        if at_horizon {
            break;
        }
        if prune.enabled && !live.is_empty() {
            let min = live.iter().map(|l| l.pos).fold(f64::INFINITY, f64::min);
            reference = min;
            let cutoff = min + prune.window;
            let mut kept = Vec::with_capacity(live.len());
            for l in live.drain(..) {
                if l.pos > cutoff {
                    let n = arena.node_mut(l.node);
                    n.event_time = end;
                    n.event_pos = l.pos;
                    n.kind = EventKind::Pruned;
                    live_count -= 1;
                    pruned_any = true;
                    mark_pruned(l.pos, &mut pruned_m, &mut pruned_z);
                } else {
                    kept.push(l);
                }
            }
            live = kept;
        }
    }

    arena.set_checkpoints(samples);
    let mut snap = PopulationSnapshot::from_unsorted(spec.horizon, leaves);
    snap.pruned = pruned_any;
    snap.pruned_additive = pruned_m.value();
    snap.pruned_derivative = pruned_z.value();
    Ok((snap, arena))
}

#[cfg(test)]
mod tests;
