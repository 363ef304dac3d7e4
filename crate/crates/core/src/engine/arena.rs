use serde::{Deserialize, Serialize};

use super::snapshot::{Atom, PopulationSnapshot};
use crate::error::{Error, Result};

/// Index of a node in a [`LineageArena`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// Split into two children born at the event.
    Branch,
    /// Alive at the simulation horizon.
    Horizon,
    /// Frozen on a stopping line.
    Absorbed,
    /// Discarded by front-window pruning.
    Pruned,
}

/// One edge of the genealogy: a particle from its birth to its event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub parent: Option<NodeId>,
    pub birth_time: f64,
    pub birth_pos: f64,
    pub event_time: f64,
    pub event_pos: f64,
    pub kind: EventKind,
    /// Children of a branch event are allocated as `first_child` and `first_child + 1`.
    pub first_child: Option<NodeId>,
}

impl Node {
    pub fn children(&self) -> Option<[NodeId; 2]> {
        self.first_child.map(|c| [c, NodeId(c.0 + 1)])
    }

    /// Whether `s` lies in the closed lifespan `[birth, event]`.
    pub fn covers(&self, s: f64) -> bool {
        s >= self.birth_time && s <= self.event_time
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
struct CheckpointSpan {
    first_grid: u32,
    count: u32,
    offset: u64,
}

/// Append-only genealogy of one run.
///
/// Nodes are stored in creation order, so a parent always precedes its
/// children. Positions at the declared checkpoint times are stored per node
/// for the grid times inside `(birth, event]` (the root also owns time 0).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineageArena {
    pub(crate) nodes: Vec<Node>,
    pub(crate) grid: Vec<f64>,
    spans: Vec<CheckpointSpan>,
    values: Vec<f64>,
}

pub(crate) const TIME_TOL: f64 = 1e-9;

impl LineageArena {
    pub(crate) fn with_grid(grid: Vec<f64>) -> Self {
        LineageArena { nodes: Vec::new(), grid, spans: Vec::new(), values: Vec::new() }
    }

    pub(crate) fn push(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        id
    }

    pub(crate) fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id.index()]
    }

    /// Installs checkpoint samples given as `(node, grid index, position)`.
    pub(crate) fn set_checkpoints(&mut self, mut samples: Vec<(u32, u32, f64)>) {
        samples.sort_unstable_by_key(|&(n, g, _)| (n, g));
        self.spans = vec![CheckpointSpan::default(); self.nodes.len()];
        self.values = Vec::with_capacity(samples.len());
        for (i, &(n, g, x)) in samples.iter().enumerate() {
            let span = &mut self.spans[n as usize];
            if span.count == 0 {
                span.first_grid = g;
                span.offset = i as u64;
            }
            debug_assert_eq!(span.first_grid + span.count, g, "checkpoints must be contiguous per node");
            span.count += 1;
            self.values.push(x);
        }
    }

    /// Builds an arena from explicit records. Used by fixtures and file readers.
    pub fn from_parts(nodes: Vec<Node>, grid: Vec<f64>, checkpoints: Vec<(NodeId, usize, f64)>) -> Result<Self> {
        let mut arena = LineageArena::with_grid(grid);
        for node in nodes {
            arena.push(node);
        }
        arena.validate_links()?;
        let samples = checkpoints.into_iter().map(|(n, g, x)| (n.0, g as u32, x)).collect();
        arena.set_checkpoints(samples);
        Ok(arena)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn get(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.index())
            .ok_or_else(|| Error::Query(format!("node {id} not in arena of {} nodes", self.nodes.len())))
    }

    /// Checkpoint samples of one node as `(grid time, position)` pairs.
    pub fn checkpoints(&self, id: NodeId) -> impl Iterator<Item = (f64, f64)> + '_ {
        let span = self.spans.get(id.index()).copied().unwrap_or_default();
        let start = span.offset as usize;
        (0..span.count as usize)
            .map(move |k| (self.grid[span.first_grid as usize + k], self.values[start + k]))
    }

    fn checkpoint_at(&self, id: NodeId, grid_index: usize) -> Option<f64> {
        let span = self.spans.get(id.index())?;
        let g = grid_index as u32;
        if span.count > 0 && g >= span.first_grid && g < span.first_grid + span.count {
            Some(self.values[span.offset as usize + (g - span.first_grid) as usize])
        } else {
            None
        }
    }

    /// The particles sampled at grid point `g`. Pruned mass is not tracked at checkpoints.
    pub fn checkpoint_snapshot(&self, g: usize) -> Option<PopulationSnapshot> {
        let t = *self.grid.get(g)?;
        let atoms = (0..self.nodes.len())
            .map(|i| NodeId(i as u32))
            .filter_map(|id| self.checkpoint_at(id, g).map(|position| Atom { position, node: id }))
            .collect();
        Some(PopulationSnapshot::from_unsorted(t, atoms))
    }

    pub fn grid_index(&self, s: f64) -> Option<usize> {
        let i = self.grid.partition_point(|&g| g < s - TIME_TOL);
        (i < self.grid.len() && (self.grid[i] - s).abs() <= TIME_TOL).then_some(i)
    }

    /// Ancestors of `id` from the root down to `id` itself.
    pub fn lineage(&self, id: NodeId) -> Result<Vec<NodeId>> {
        self.get(id)?;
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur.index()].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    /// `X_{i,t}(s)`: position at time `s` of the ancestor of `leaf`.
    ///
    /// Exact at birth/event times; otherwise `s` must be a checkpoint time.
    pub fn ancestral_position(&self, leaf: NodeId, s: f64) -> Result<f64> {
        let node = self.get(leaf)?;
        if s > node.event_time + TIME_TOL {
            return Err(Error::Query(format!("time {s} is after the event time {} of node {leaf}", node.event_time)));
        }
        let mut cur = leaf;
        loop {
            let n = &self.nodes[cur.index()];
            if s >= n.birth_time - TIME_TOL {
                if (s - n.event_time).abs() <= TIME_TOL {
                    return Ok(n.event_pos);
                }
                if (s - n.birth_time).abs() <= TIME_TOL {
                    return Ok(n.birth_pos);
                }
                return self
                    .grid_index(s)
                    .and_then(|g| self.checkpoint_at(cur, g))
                    .ok_or_else(|| Error::Query(format!("time {s} is neither an event time nor a recorded checkpoint")));
            }
            match n.parent {
                Some(p) => cur = p,
                None => return Err(Error::Query(format!("time {s} precedes the root"))),
            }
        }
    }

    /// Ancestral path of `leaf` as time-ordered knots: births, checkpoints, and the final event.
    pub fn ancestral_path(&self, leaf: NodeId) -> Result<Vec<(f64, f64)>> {
        let lineage = self.lineage(leaf)?;
        let mut knots = Vec::with_capacity(lineage.len() * 2);
        for id in lineage {
            let n = &self.nodes[id.index()];
            if knots.is_empty() {
                knots.push((n.birth_time, n.birth_pos));
            }
            for (s, x) in self.checkpoints(id) {
                let last = knots.last().map(|k: &(f64, f64)| k.0).unwrap_or(f64::NEG_INFINITY);
                if s > last + TIME_TOL {
                    knots.push((s, x));
                }
            }
            let last = knots.last().map(|k| k.0).unwrap_or(f64::NEG_INFINITY);
            if n.event_time > last + TIME_TOL {
                knots.push((n.event_time, n.event_pos));
            }
        }
        Ok(knots)
    }

    /// Checks the parent/child chaining invariants of the genealogy.
    pub fn validate_links(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            match (n.kind, n.children()) {
                (EventKind::Branch, Some(kids)) => {
                    for c in kids {
                        let child = self.get(c)?;
                        if child.parent != Some(NodeId(i as u32))
                            || child.birth_time != n.event_time
                            || child.birth_pos != n.event_pos
                        {
                            return Err(Error::Numeric(format!("node {c} is not chained to its parent {i}")));
                        }
                    }
                }
                (EventKind::Branch, None) => {
                    return Err(Error::Numeric(format!("branch node {i} has no children")));
                }
                (_, Some(_)) => return Err(Error::Numeric(format!("non-branch node {i} has children"))),
                _ => {}
            }
            if let Some(p) = n.parent {
                if p.index() >= i {
                    return Err(Error::Numeric(format!("node {i} precedes its parent {p}")));
                }
            }
        }
        Ok(())
    }
}
