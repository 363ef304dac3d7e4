//! Backward views of a finished run: the path of a particle seen from time `t`,
//! the point measures of relatives that split off along it, pairwise split
//! times and the path-localisation events.

use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, LineageArena, NodeId, PopulationSnapshot};
use crate::error::{Error, Result};
use crate::frontstats::PointMeasure;

/// Relatives that split from the tagged lineage at one branch event.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub tau: f64,
    /// Positions at time `t` relative to the tagged particle.
    pub relatives: PointMeasure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackwardDecomposition {
    pub leaf: NodeId,
    pub t: f64,
    pub x1: f64,
    /// `(s, Y_t(s))` with `Y_t(s) = X_{1,t}(t - s) - X_1(t)`, increasing in `s`.
    pub backward_path: Vec<(f64, f64)>,
    /// One record per branch event on the lineage, most recent first.
    pub records: Vec<BranchRecord>,
}

/// Splits the population at time `t` along the lineage of `leaf`.
pub fn backward_decomposition(arena: &LineageArena, snapshot: &PopulationSnapshot, leaf: NodeId) -> Result<BackwardDecomposition> {
    let atom = snapshot
        .atoms
        .iter()
        .find(|a| a.node == leaf)
        .ok_or_else(|| Error::Query(format!("node {leaf} is not in the snapshot")))?;
    let x1 = atom.position;
    let t = snapshot.time;
    let lineage = arena.lineage(leaf)?;

    // For every node, the index in `lineage` of the branch node it split from.
    const ON_PATH: u32 = u32::MAX;
    const UNSET: u32 = u32::MAX - 1;
    let mut split = vec![UNSET; arena.len()];
    let mut path_index = vec![0u32; arena.len()];
    for (i, id) in lineage.iter().enumerate() {
        split[id.index()] = ON_PATH;
        path_index[id.index()] = i as u32;
    }
    for (idx, node) in arena.nodes().iter().enumerate() {
        if split[idx] == ON_PATH {
            continue;
        }
        if let Some(p) = node.parent {
            let sp = split[p.index()];
            split[idx] = if sp == ON_PATH { path_index[p.index()] } else { sp };
        }
    }

    let branches = lineage.len() - 1;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); branches];
    for a in &snapshot.atoms {
        if a.node == leaf {
            continue;
        }
        let s = *split
            .get(a.node.index())
            .ok_or_else(|| Error::Query(format!("snapshot node {} not in arena", a.node)))?;
        if s == ON_PATH || s == UNSET {
            return Err(Error::Query(format!("snapshot node {} is not a relative of {leaf}", a.node)));
        }
        buckets[s as usize].push(a.position - x1);
    }
    let mut records = Vec::with_capacity(branches);
    for (i, rel) in buckets.into_iter().enumerate().rev() {
        let node = arena.get(lineage[i])?;
        debug_assert_eq!(node.kind, EventKind::Branch);
        records.push(BranchRecord { tau: node.event_time, relatives: PointMeasure::new(rel) });
    }

    let mut backward_path = vec![(0.0, 0.0)];
    for &g in arena.grid().iter().rev() {
        if g < t - 1e-9 {
            backward_path.push((t - g, arena.ancestral_position(leaf, g)? - x1));
        }
    }
    Ok(BackwardDecomposition { leaf, t, x1, backward_path, records })
}

/// Decomposition along the leftmost particle.
pub fn leftmost_decomposition(arena: &LineageArena, snapshot: &PopulationSnapshot) -> Result<BackwardDecomposition> {
    let leaf = snapshot.leftmost().ok_or_else(|| Error::Query("empty snapshot".into()))?.node;
    backward_decomposition(arena, snapshot, leaf)
}

impl BackwardDecomposition {
    /// Total number of relatives over all records.
    pub fn relatives(&self) -> usize {
        self.records.iter().map(|r| r.relatives.len()).sum()
    }

    /// `Y_t(s)` at a recorded backward time.
    pub fn y_at(&self, s: f64) -> Option<f64> {
        self.backward_path.iter().find(|(u, _)| (u - s).abs() <= 1e-9).map(|&(_, y)| y)
    }
}

/// `Q(t, zeta) = delta_0 + sum over records with tau > t - zeta`.
pub fn decoration_window(decomp: &BackwardDecomposition, zeta: f64) -> Result<PointMeasure> {
    if !(0.0..=decomp.t).contains(&zeta) {
        return Err(Error::Domain(format!("window length {zeta} outside [0, {}]", decomp.t)));
    }
    let cut = decomp.t - zeta;
    let mut atoms = vec![0.0];
    for r in decomp.records.iter().take_while(|r| r.tau > cut) {
        atoms.extend_from_slice(r.relatives.atoms());
    }
    Ok(PointMeasure::new(atoms))
}

/// Event time of the most recent common ancestor of `i` and `j`.
///
/// For `i == j` this is the node's own event time; if one node is an ancestor
/// of the other it is the ancestor's event time.
pub fn pair_branch_time(arena: &LineageArena, i: NodeId, j: NodeId) -> Result<f64> {
    if i == j {
        return Ok(arena.get(i)?.event_time);
    }
    let a = arena.lineage(i)?;
    let b = arena.lineage(j)?;
    let common = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return Err(Error::Query(format!("nodes {i} and {j} have no common ancestor")));
    }
    Ok(arena.get(a[common - 1])?.event_time)
}

/// Flags of the localisation events for all particles within `eta` of `m_t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEventReport {
    pub t: f64,
    pub x: f64,
    pub eta: f64,
    /// Largest checkpoint gap on `[0, t]`.
    pub resolution: f64,
    /// Number of particles with `|X_i(t) - m_t| < eta`.
    pub particles: usize,
    pub e1: bool,
    pub e2: bool,
    pub e3: bool,
    pub a: bool,
}

impl PathEventReport {
    pub const CSV_HEADER: &'static str = "t,x,eta,E1,E2,E3,A";

    pub fn csv_row(&self) -> String {
        format!("{:?},{:?},{:?},{},{},{},{}", self.t, self.x, self.eta, self.e1, self.e2, self.e3, self.a)
    }
}

/// Evaluates `E1`, `E2`, `E3` and `A = E1 and E2 and E3` on the checkpoint grid.
///
/// The grid must cover `[0, t]` with gaps at most `resolution`.
pub fn check_path_events(
    arena: &LineageArena,
    snapshot: &PopulationSnapshot,
    m_t: f64,
    x: f64,
    eta: f64,
    resolution: f64,
) -> Result<PathEventReport> {
    let t = snapshot.time;
    let grid = arena.grid();
    let covers = grid.first().is_some_and(|&g| g <= 1e-9) && grid.last().is_some_and(|&g| g >= t - 1e-9);
    let gap = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if !covers || gap > resolution + 1e-12 {
        return Err(Error::Query(format!(
            "checkpoint grid must cover [0, {t}] with spacing at most {resolution} (largest gap {gap}, covers: {covers})"
        )));
    }
    let (mut e1, mut e2, mut e3) = (true, true, true);
    let mut particles = 0;
    let half = 0.5 * t;
    for atom in snapshot.atoms.iter().filter(|a| (a.position - m_t).abs() < eta) {
        particles += 1;
        let xt = atom.position;
        for &s in grid.iter().filter(|&&s| s <= t + 1e-9) {
            let p = arena.ancestral_position(atom.node, s)?;
            if p < -x || (s >= half && p < m_t - x) {
                e1 = false;
            }
            if s >= x && s <= half && p < s.cbrt() {
                e2 = false;
            }
            let back = t - s;
            if back >= x && back <= half {
                let d = p - xt;
                if d < back.cbrt() || d > back.powf(2.0 / 3.0) {
                    e3 = false;
                }
            }
        }
    }
    Ok(PathEventReport { t, x, eta, resolution: gap, particles, e1, e2, e3, a: e1 && e2 && e3 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{simulate, Node, SimSpec};

    fn fixture(p1: f64, p2: f64, tau: f64, t: f64) -> (LineageArena, PopulationSnapshot) {
        let nodes = vec![
            Node { parent: None, birth_time: 0.0, birth_pos: 0.0, event_time: tau, event_pos: 0.5, kind: EventKind::Branch, first_child: Some(NodeId(1)) },
            Node { parent: Some(NodeId(0)), birth_time: tau, birth_pos: 0.5, event_time: t, event_pos: p1, kind: EventKind::Horizon, first_child: None },
            Node { parent: Some(NodeId(0)), birth_time: tau, birth_pos: 0.5, event_time: t, event_pos: p2, kind: EventKind::Horizon, first_child: None },
        ];
        let arena = LineageArena::from_parts(nodes, vec![], vec![]).unwrap();
        let mut snap = PopulationSnapshot::from_positions(t, &[p2, p1]);
        snap.atoms[0].node = if p1 <= p2 { NodeId(1) } else { NodeId(2) };
        snap.atoms[1].node = if p1 <= p2 { NodeId(2) } else { NodeId(1) };
        (arena, snap)
    }

    #[test]
    fn three_node_fixture() {
        let (arena, snap) = fixture(1.0, 2.5, 0.7, 2.0);
        let d = backward_decomposition(&arena, &snap, NodeId(1)).unwrap();
        assert_eq!(d.records.len(), 1);
        assert_eq!(d.records[0].tau, 0.7);
        assert_eq!(d.records[0].relatives.atoms(), &[1.5]);
        assert_eq!(pair_branch_time(&arena, NodeId(1), NodeId(2)).unwrap(), 0.7);
        assert_eq!(pair_branch_time(&arena, NodeId(0), NodeId(2)).unwrap(), 0.7);
        assert_eq!(pair_branch_time(&arena, NodeId(2), NodeId(2)).unwrap(), 2.0);
        assert!(pair_branch_time(&arena, NodeId(1), NodeId(9)).is_err());
        assert!(backward_decomposition(&arena, &snap, NodeId(0)).is_err());
    }

    #[test]
    fn no_branch_run() {
        let spec = SimSpec::new(2.0, 3).with_uniform_checkpoints(0.5).without_branching();
        let (snap, arena) = simulate(&spec).unwrap();
        let d = leftmost_decomposition(&arena, &snap).unwrap();
        assert!(d.records.is_empty());
        assert_eq!(d.backward_path[0], (0.0, 0.0));
        let leaf = snap.atoms[0].node;
        for &(s, y) in &d.backward_path {
            assert_eq!(y, arena.ancestral_position(leaf, 2.0 - s).unwrap() - snap.atoms[0].position);
        }
    }

    #[test]
    fn partition_and_windows() {
        for seed in 0..20 {
            let spec = SimSpec::new(4.0, seed).with_uniform_checkpoints(0.5);
            let (snap, arena) = simulate(&spec).unwrap();
            let d = leftmost_decomposition(&arena, &snap).unwrap();
            assert_eq!(d.relatives() + 1, snap.len());
            assert!(d.records.windows(2).all(|w| w[0].tau > w[1].tau));
            assert!(d.records.iter().all(|r| r.tau <= 4.0 && r.relatives.min().is_none_or(|m| m >= 0.0)));
            assert_eq!(decoration_window(&d, 0.0).unwrap().atoms(), &[0.0]);
            assert_eq!(decoration_window(&d, 4.0).unwrap().len(), snap.len());
            let mut last = 0;
            for z in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0] {
                let w = decoration_window(&d, z).unwrap();
                assert_eq!(w.min(), Some(0.0));
                assert!(w.len() >= last);
                last = w.len();
            }
            assert!(decoration_window(&d, 5.0).is_err());
            // Every relative's pairwise split time with the leaf is its record's tau.
            for r in &d.records {
                for &rel in r.relatives.atoms() {
                    let other = snap.atoms.iter().find(|a| (a.position - d.x1 - rel).abs() == 0.0).unwrap();
                    if other.node != d.leaf {
                        assert_eq!(pair_branch_time(&arena, d.leaf, other.node).unwrap(), r.tau);
                    }
                }
            }
        }
    }

    #[test]
    fn pair_times_symmetric() {
        let (snap, arena) = simulate(&SimSpec::new(5.0, 8)).unwrap();
        let n = snap.len();
        let root = arena.get(arena.root()).unwrap().event_time;
        for k in 0..1000usize {
            let i = snap.atoms[(k * 7919) % n].node;
            let j = snap.atoms[(k * 104_729 + 3) % n].node;
            assert_eq!(pair_branch_time(&arena, i, j).unwrap(), pair_branch_time(&arena, j, i).unwrap());
            assert_eq!(pair_branch_time(&arena, arena.root(), i).unwrap(), root);
        }
    }

    #[test]
    fn events_vacuous_and_nested() {
        let spec = SimSpec::new(2.0, 1).with_uniform_checkpoints(0.1).without_branching();
        let (snap, arena) = simulate(&spec).unwrap();
        let r = check_path_events(&arena, &snap, 1e6, 1.0, 0.1, 0.1).unwrap();
        assert_eq!(r.particles, 0);
        assert!(r.e1 && r.e2 && r.e3 && r.a);
        assert!(check_path_events(&arena, &snap, 0.0, 1.0, 1.0, 0.05).is_err());
        for seed in 0..20 {
            let spec = SimSpec::new(6.0, seed).with_uniform_checkpoints(0.1);
            let (snap, arena) = simulate(&spec).unwrap();
            let m = 1.5 * 6f64.ln() - 0.6;
            let flags: Vec<bool> = [0.5, 1.0, 2.0, 3.0]
                .iter()
                .map(|&x| check_path_events(&arena, &snap, m, x, 2.0, 0.1).unwrap().a)
                .collect();
            assert!(flags.windows(2).all(|w| !w[0] || w[1]), "{flags:?}");
        }
    }
}
