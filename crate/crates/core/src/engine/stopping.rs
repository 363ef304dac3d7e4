//! Stopping lines: every lineage is frozen at its first passage of a level `k`.

use rand::Rng;
use rand_distr::{Distribution, Exp1, InverseGaussian, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EventKind, LineageArena, ModelParams, NodeId};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Purpose, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub node: NodeId,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingLineResult {
    pub level: f64,
    pub hits: Vec<Hit>,
}

impl StoppingLineResult {
    /// `H_k`, the number of particles on the line.
    pub fn count(&self) -> usize {
        self.hits.len()
    }

    /// `Z_k = k e^{-k} H_k`.
    pub fn z(&self) -> f64 {
        self.level * (-self.level).exp() * self.hits.len() as f64
    }

    /// `e^{-k} H_k`, the additive martingale evaluated on the line.
    pub fn additive(&self) -> f64 {
        (-self.level).exp() * self.hits.len() as f64
    }
}

/// The stopping line at level `k` for a BBM started at 0.
pub fn stopping_line(params: &ModelParams, k: f64, seed: u64, cap: usize) -> Result<StoppingLineResult> {
    stopping_line_from(params, k, 0.0, seed, cap)
}

/// The stopping line at level `k` for a BBM started at `x0 < k`.
///
/// Node ids number particles in creation order (root 0, children of a branch
/// consecutive); they do not refer to any arena.
pub fn stopping_line_from(params: &ModelParams, k: f64, x0: f64, seed: u64, cap: usize) -> Result<StoppingLineResult> {
    run_line(params, k, x0, None, seed, cap)
}

/// The stopping line at level `k` for a BBM started at 0 in which every
/// lineage that reaches `floor < 0` before `k` is killed.
///
/// With the critical parameters `E[e^{-k} H_k] = |floor| / (|floor| + k)` and,
/// unlike the unkilled line, `e^{-k} H_k` has finite variance.
pub fn stopping_line_with_floor(params: &ModelParams, k: f64, floor: f64, seed: u64, cap: usize) -> Result<StoppingLineResult> {
    if !(floor < 0.0) {
        return Err(Error::Domain(format!("floor {floor} must be below the start 0")));
    }
    run_line(params, k, 0.0, Some(floor), seed, cap)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Exit {
    Upper,
    Lower,
}

/// Which barrier a Brownian bridge from `x` to `y` over time `len` reaches first, if any.
/// When both are plausible the bridge is split at a sampled midpoint.
fn first_exit(x: f64, y: f64, len: f64, k: f64, floor: f64, s2: f64, rng: &mut StreamRng, depth: u32) -> Option<Exit> {
    let prob = |a: f64, b: f64| if a <= 0.0 || b <= 0.0 { 1.0 } else { (-2.0 * a * b / (s2 * len)).exp() };
    let up = prob(k - x, k - y);
    let down = prob(x - floor, y - floor);
    if up * down < 1e-12 || depth > 40 {
        let u: f64 = rng.random();
        if up >= down {
            if u < up {
                return Some(Exit::Upper);
            }
            let v: f64 = rng.random();
            // Conditionally on not crossing the upper barrier the lower one is crossed with
            // probability `down` up to the negligible joint term.
            return (v < down).then_some(Exit::Lower);
        }
        if u < down {
            return Some(Exit::Lower);
        }
        let v: f64 = rng.random();
        return (v < up).then_some(Exit::Upper);
    }
    let half = 0.5 * len;
    let mid = 0.5 * (x + y) + (s2 * len / 4.0).sqrt() * rng.sample::<f64, _>(StandardNormal);
    first_exit(x, mid, half, k, floor, s2, rng, depth + 1)
        .or_else(|| first_exit(mid, y, half, k, floor, s2, rng, depth + 1))
}

fn run_line(params: &ModelParams, k: f64, x0: f64, floor: Option<f64>, seed: u64, cap: usize) -> Result<StoppingLineResult> {
    params.validate()?;
    if !(k.is_finite() && x0.is_finite()) {
        return Err(Error::Domain(format!("level {k} and start {x0} must be finite")));
    }
    if x0 >= k {
        return Err(Error::Domain(format!("start {x0} is not below the level {k}")));
    }
    let mut hits = Vec::new();
    // (id, birth time, position)
    let mut stack: Vec<(u64, f64, f64)> = vec![(0, 0.0, x0)];
    let mut next_id: u64 = 1;
    let s2 = params.sigma * params.sigma;
    while let Some((id, t0, x)) = stack.pop() {
        let mut rng = StreamRng::new(seed, Purpose::StoppingLine, id);
        let life = rng.sample::<f64, _>(Exp1) / params.lambda;
        let y = x + params.rho * life + params.sigma * life.sqrt() * rng.sample::<f64, _>(StandardNormal);
        if !y.is_finite() {
            return Err(Error::Numeric(format!("non-finite position in stopping line at particle {id}")));
        }
        let exit = match floor {
            None => {
                let crossed = y >= k || rng.random::<f64>() < (-2.0 * (k - x) * (k - y) / (s2 * life)).exp();
                crossed.then_some(Exit::Upper)
            }
            Some(f) => first_exit(x, y, life, k, f, s2, &mut rng, 0),
        };
        match exit {
            Some(Exit::Upper) => {
                let ig = InverseGaussian::new((k - x) / params.rho, (k - x) * (k - x) / s2)
                    .map_err(|e| Error::Numeric(format!("inverse Gaussian: {e}")))?;
                let mut tau = ig.sample(&mut rng);
                let mut tries = 0;
                while tau >= life {
                    tau = ig.sample(&mut rng);
                    tries += 1;
                    if tries > 1_000_000 {
                        tau = life;
                        break;
                    }
                }
                hits.push(Hit { node: NodeId(id as u32), time: t0 + tau });
            }
            Some(Exit::Lower) => {}
            None => {
                stack.push((next_id, t0 + life, y));
                stack.push((next_id + 1, t0 + life, y));
                next_id += 2;
            }
        }
        if hits.len() + stack.len() > cap {
            return Err(Error::Resource { live: hits.len() + stack.len(), cap });
        }
    }
    Ok(StoppingLineResult { level: k, hits })
}

/// First-passage time to `k` of a Brownian bridge from `a` at time 0 to `b` at time `len`,
/// given that it crosses. Rejection from the free first-passage law of the start point.
fn bridge_hit_time(a: f64, b: f64, k: f64, len: f64, sigma: f64, rng: &mut StreamRng) -> f64 {
    let s2 = sigma * sigma;
    let da = k - a;
    if da <= 0.0 {
        return 0.0;
    }
    let c = (k - b).powi(2) / (2.0 * s2);
    let h = |u: f64| if u <= 0.0 { 0.0 } else { u.powf(-0.5) * (-c / u).exp() };
    let hmax = if 2.0 * c <= len { h(2.0 * c) } else { h(len) };
    if !(hmax.is_finite() && hmax > 0.0) {
        return len;
    }
    for _ in 0..100_000 {
        let z: f64 = rng.sample(StandardNormal);
        let s = da * da / (s2 * z * z);
        if s >= len {
            continue;
        }
        if rng.random::<f64>() * hmax <= h(len - s) {
            return s;
        }
    }
    0.5 * len
}

/// The stopping line at level `k` read off a recorded run.
///
/// Each edge of the arena is scanned between consecutive recorded positions
/// (birth, checkpoints, event) with the exact Brownian-bridge crossing
/// probability. Lineages still below `k` at the horizon or at a pruning event
/// are continued by an independent [`stopping_line_from`] run from their last
/// position, which is exact by the Markov property. Hits found in such a
/// continuation are credited to the arena leaf they descend from.
pub fn arena_stopping_line(
    arena: &LineageArena,
    params: &ModelParams,
    k: f64,
    seed: u64,
    cap: usize,
) -> Result<StoppingLineResult> {
    params.validate()?;
    if arena.is_empty() {
        return Err(Error::Query("empty arena".into()));
    }
    let root = arena.get(arena.root())?;
    if root.birth_pos >= k {
        return Err(Error::Domain(format!("root starts at {} which is not below {k}", root.birth_pos)));
    }
    let s2 = params.sigma * params.sigma;
    let mut hits = Vec::new();
    let mut stack = vec![arena.root()];
    while let Some(id) = stack.pop() {
        let node = arena.get(id)?;
        let mut knots = vec![(node.birth_time, node.birth_pos)];
        knots.extend(arena.checkpoints(id).filter(|&(s, _)| s > node.birth_time && s < node.event_time));
        knots.push((node.event_time, node.event_pos));
        let mut rng = StreamRng::new(seed, Purpose::Crossing, id.0 as u64);
        let mut hit = None;
        for w in knots.windows(2) {
            let ((s0, a), (s1, b)) = (w[0], w[1]);
            let len = s1 - s0;
            if len <= 0.0 {
                continue;
            }
            let u: f64 = rng.random();
            if b >= k || u < (-2.0 * (k - a) * (k - b) / (s2 * len)).exp() {
                hit = Some(s0 + bridge_hit_time(a, b, k, len, params.sigma, &mut rng));
                break;
            }
        }
        if let Some(time) = hit {
            hits.push(Hit { node: id, time });
        } else {
            match node.kind {
                EventKind::Branch => {
                    let [c0, c1] = node
                        .children()
                        .ok_or_else(|| Error::Query(format!("branch node {id} has no children")))?;
                    stack.push(c1);
                    stack.push(c0);
                }
                EventKind::Horizon | EventKind::Pruned => {
                    let sub = derive_seed(seed, Purpose::StoppingLine, id.0 as u64);
                    let rest = stopping_line_from(params, k, node.event_pos, sub, cap.saturating_sub(hits.len()))?;
                    hits.extend(rest.hits.into_iter().map(|h| Hit { node: id, time: node.event_time + h.time }));
                }
                EventKind::Absorbed => {}
            }
        }
        if hits.len() > cap {
            return Err(Error::Resource { live: hits.len(), cap });
        }
    }
    Ok(StoppingLineResult { level: k, hits })
}
