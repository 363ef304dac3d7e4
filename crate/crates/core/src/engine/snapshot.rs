use serde::{Deserialize, Serialize};

use super::arena::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub node: NodeId,
}

/// Particle positions at a fixed time, sorted from left to right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSnapshot {
    pub time: f64,
    pub atoms: Vec<Atom>,
    /// Whether any particle was discarded by pruning before `time`.
    pub pruned: bool,
    /// `sum e^{-x}` over pruned particles at their pruning positions.
    pub pruned_additive: f64,
    /// `sum x e^{-x}` over pruned particles at their pruning positions.
    pub pruned_derivative: f64,
}

impl PopulationSnapshot {
    pub(crate) fn from_unsorted(time: f64, mut atoms: Vec<Atom>) -> Self {
        atoms.sort_unstable_by(|a, b| a.position.total_cmp(&b.position).then(a.node.cmp(&b.node)));
        PopulationSnapshot { time, atoms, pruned: false, pruned_additive: 0.0, pruned_derivative: 0.0 }
    }

    /// Builds a snapshot from raw positions; node ids are assigned in input order.
    pub fn from_positions(time: f64, positions: &[f64]) -> Self {
        let atoms = positions
            .iter()
            .enumerate()
            .map(|(i, &position)| Atom { position, node: NodeId(i as u32) })
            .collect();
        Self::from_unsorted(time, atoms)
    }

    /// `N(t)`.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `X_1(t)`, the leftmost particle.
    pub fn leftmost(&self) -> Option<Atom> {
        self.atoms.first().copied()
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.position)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.atoms.iter().any(|a| a.node == node)
    }
}
