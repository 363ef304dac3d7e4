use super::*;
use crate::rng::derive_seed;

fn replicas<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn params_defaults_are_critical() {
    let p = ModelParams::default();
    assert!(p.is_critical());
    assert!(ModelParams::new(1.0, 2.0, 1.0).is_err());
    assert!(ModelParams::new(-1.0, 2.0, 2f64.sqrt()).is_err());
    let q = ModelParams::critical(3.0).unwrap();
    assert!((q.rho - 6.0).abs() < 1e-15);
}

#[test]
fn zero_horizon_is_single_root() {
    let (snap, arena) = simulate(&SimSpec::new(0.0, 3).with_checkpoints(vec![0.0])).unwrap();
    assert_eq!(snap.len(), 1);
    assert_eq!(snap.atoms[0].position, 0.0);
    assert_eq!(snap.atoms[0].node, arena.root());
    assert_eq!(arena.ancestral_position(arena.root(), 0.0).unwrap(), 0.0);
}

#[test]
fn invalid_specs_rejected() {
    assert!(matches!(simulate(&SimSpec::new(-1.0, 1)), Err(Error::Config(_))));
    let spec = SimSpec::new(1.0, 1).with_checkpoints(vec![0.0, 2.0]);
    assert!(matches!(simulate(&spec), Err(Error::Config(_))));
    let spec = SimSpec::new(1.0, 1).with_checkpoints(vec![0.5, 0.5]);
    assert!(simulate(&spec).is_err());
}

#[test]
fn deterministic_for_equal_seeds() {
    let spec = SimSpec::new(4.0, 99).with_uniform_checkpoints(0.5);
    let (a, ra) = simulate(&spec).unwrap();
    let (b, rb) = simulate(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    let (c, _) = simulate(&SimSpec::new(4.0, 100)).unwrap();
    assert_ne!(a.positions().collect::<Vec<_>>(), c.positions().collect::<Vec<_>>());
}

#[test]
fn genealogy_chains_and_checkpoints() {
    let spec = SimSpec::new(3.0, 5).with_uniform_checkpoints(0.25);
    let (snap, arena) = simulate(&spec).unwrap();
    arena.validate_links().unwrap();
    for atom in &snap.atoms {
        let line = arena.lineage(atom.node).unwrap();
        assert_eq!(line[0], arena.root());
        for w in line.windows(2) {
            let (p, c) = (arena.get(w[0]).unwrap(), arena.get(w[1]).unwrap());
            assert_eq!(p.event_time, c.birth_time);
            assert_eq!(p.event_pos, c.birth_pos);
            assert_eq!(p.kind, EventKind::Branch);
        }
        assert_eq!(arena.ancestral_position(atom.node, 0.0).unwrap(), 0.0);
        assert_eq!(arena.ancestral_position(atom.node, 3.0).unwrap(), atom.position);
        for &s in arena.grid() {
            arena.ancestral_position(atom.node, s).unwrap();
        }
        assert!(arena.ancestral_position(atom.node, 0.3).is_err());
    }
    for n in arena.nodes() {
        if let Some([a, b]) = n.children() {
            let pa = arena.ancestral_position(a, n.event_time).unwrap();
            let pb = arena.ancestral_position(b, n.event_time).unwrap();
            assert_eq!(pa, pb);
        }
    }
    let ids: std::collections::HashSet<_> = snap.atoms.iter().map(|a| a.node).collect();
    assert_eq!(ids.len(), snap.len());
    assert!(snap.atoms.windows(2).all(|w| w[0].position <= w[1].position));
}

#[test]
fn checkpoint_snapshots_hold_the_living_population() {
    let spec = SimSpec::new(3.0, 5).with_uniform_checkpoints(0.5);
    let (snap, arena) = simulate(&spec).unwrap();
    for (g, &s) in arena.grid().iter().enumerate() {
        let cs = arena.checkpoint_snapshot(g).unwrap();
        let alive = arena.nodes().iter().filter(|n| n.birth_time <= s && s < n.event_time).count();
        assert_eq!(cs.len(), if s == 3.0 { snap.len() } else { alive });
    }
    let last = arena.checkpoint_snapshot(arena.grid().len() - 1).unwrap();
    assert_eq!(last.atoms, snap.atoms);
    assert!(arena.checkpoint_snapshot(arena.grid().len()).is_none());
}

#[test]
fn mean_population_grows_exponentially() {
    let counts: Vec<f64> = replicas(10_000, |r| {
        simulate(&SimSpec::new(2.0, derive_seed(11, Purpose::Replica, r))).unwrap().0.len() as f64
    });
    let (m, se) = mean_se(&counts);
    let e2 = 2f64.exp();
    assert!((m - e2).abs() < 3.0 * se, "mean N(2) = {m} +- {se}");
}

/// Forward equations of the Yule process integrated with RK4.
fn yule_law(t: f64, lambda: f64, kmax: usize) -> Vec<f64> {
    let mut p = vec![0.0; kmax + 1];
    p[1] = 1.0;
    let f = |p: &[f64]| -> Vec<f64> {
        (0..=kmax)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    lambda * (k as f64 - 1.0) * p[k - 1] - lambda * k as f64 * p[k]
                }
            })
            .collect()
    };
    let steps = 10_000;
    let h = t / steps as f64;
    for _ in 0..steps {
        let k1 = f(&p);
        let tmp: Vec<f64> = p.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = f(&tmp);
        let tmp: Vec<f64> = p.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = f(&tmp);
        let tmp: Vec<f64> = p.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = f(&tmp);
        for i in 0..=kmax {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p
}

#[test]
fn population_law_matches_forward_equations() {
    let kmax = 10;
    let law = yule_law(1.0, 1.0, kmax);
    // Geometric closed form as a check on the oracle itself.
    let q = 1.0 - (-1f64).exp();
    assert!((law[3] - (-1f64).exp() * q * q).abs() < 1e-10);
    let n = 10_000u64;
    let counts: Vec<usize> = replicas(n, |r| simulate(&SimSpec::new(1.0, derive_seed(12, Purpose::Replica, r))).unwrap().0.len());
    let mut obs = vec![0.0; kmax + 1];
    for c in counts {
        obs[c.min(kmax)] += 1.0;
    }
    let mut expected: Vec<f64> = law.iter().map(|p| p * n as f64).collect();
    expected[kmax] = n as f64 * (1.0 - law[1..kmax].iter().sum::<f64>());
    // Pool the sparse upper tail.
    let cut = 6;
    let (mut o, mut e) = (obs[1..cut].to_vec(), expected[1..cut].to_vec());
    o.push(obs[cut..].iter().sum());
    e.push(expected[cut..].iter().sum());
    let chi2: f64 = o.iter().zip(&e).map(|(o, e)| (o - e).powi(2) / e).sum();
    let df = (o.len() - 1) as f64;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let p = 1.0 - ChiSquared::new(df).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 = {chi2}, p = {p}");
}

#[test]
fn single_particle_increments_are_gaussian() {
    let p = ModelParams::default();
    let h = 0.25;
    let incs: Vec<Vec<f64>> = replicas(10_000, |r| {
        let spec = SimSpec::new(1.0, derive_seed(13, Purpose::Replica, r)).with_uniform_checkpoints(h).without_branching();
        let (snap, arena) = simulate(&spec).unwrap();
        let leaf = snap.atoms[0].node;
        let path: Vec<f64> = arena.grid().iter().map(|&s| arena.ancestral_position(leaf, s).unwrap()).collect();
        path.windows(2).map(|w| w[1] - w[0]).collect()
    });
    let all: Vec<f64> = incs.into_iter().flatten().collect();
    let (m, se) = mean_se(&all);
    assert!((m - p.rho * h).abs() < 3.0 * se);
    let var = all.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (all.len() as f64 - 1.0);
    let var_se = p.sigma.powi(2) * h * (2.0 / all.len() as f64).sqrt();
    assert!((var - p.sigma.powi(2) * h).abs() < 3.0 * var_se, "var {var}");
    let sd = (p.sigma.powi(2) * h).sqrt();
    let z: Vec<f64> = all.iter().map(|x| (x - p.rho * h) / sd).collect();
    let ks = crate::stats::ks_one_sample(&z, |x| crate::stats::normal_cdf(x)).unwrap();
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn martingales_have_unit_and_zero_mean() {
    let vals: Vec<(f64, f64)> = replicas(10_000, |r| {
        let (snap, _) = simulate(&SimSpec::new(1.5, derive_seed(14, Purpose::Replica, r))).unwrap();
        let m: f64 = snap.positions().map(|x| (-x).exp()).sum();
        let z: f64 = snap.positions().map(|x| x * (-x).exp()).sum();
        (m, z)
    });
    let (mm, mse) = mean_se(&vals.iter().map(|v| v.0).collect::<Vec<_>>());
    let (zm, zse) = mean_se(&vals.iter().map(|v| v.1).collect::<Vec<_>>());
    assert!((mm - 1.0).abs() < 3.0 * mse, "M {mm} +- {mse}");
    assert!(zm.abs() < 3.0 * zse, "Z {zm} +- {zse}");
}

#[test]
fn pruning_keeps_front_and_compensates_martingale() {
    let spec = SimSpec::new(8.0, 21).with_prune(PruneConfig::window(3.0));
    let (snap, arena) = simulate(&spec).unwrap();
    assert!(snap.pruned);
    let min = snap.leftmost().unwrap().position;
    assert!(snap.positions().all(|x| x <= min + 3.0 + 10.0));
    assert!(arena.nodes().iter().any(|n| n.kind == EventKind::Pruned));
    arena.validate_links().unwrap();

    let vals: Vec<f64> = replicas(4000, |r| {
        let spec = SimSpec::new(3.0, derive_seed(15, Purpose::Replica, r)).with_prune(PruneConfig::window(2.0));
        let (snap, _) = simulate(&spec).unwrap();
        snap.positions().map(|x| (-x).exp()).sum::<f64>() + snap.pruned_additive
    });
    let (m, se) = mean_se(&vals);
    assert!((m - 1.0).abs() < 3.0 * se, "{m} +- {se}");
}

#[test]
fn cap_is_enforced() {
    let spec = SimSpec::new(10.0, 1).with_prune(PruneConfig::disabled().with_cap(100));
    match simulate(&spec) {
        Err(Error::Resource { live, cap }) => {
            assert_eq!(cap, 100);
            assert!(live > 100);
        }
        other => panic!("expected resource error, got {other:?}"),
    }
}

#[test]
fn vanishing_level_is_hit_by_root() {
    let p = ModelParams::default();
    let ones = (0..200).filter(|&s| stopping_line(&p, 1e-6, s, 1000).unwrap().count() == 1).count();
    assert!(ones >= 199);
}

#[test]
fn killed_stopping_line_mean_matches_optional_stopping() {
    // Under the spine measure the tagged lineage is a driftless Brownian motion, so
    // E[e^{-k} H_k; lineage stays above -a] = P(BM hits k before -a) = a / (a + k).
    let p = ModelParams::default();
    let (k, a) = (6.0, 2.0);
    let vals: Vec<f64> = replicas(1000, |r| {
        stopping_line_with_floor(&p, k, -a, derive_seed(16, Purpose::Replica, r), 10_000_000).unwrap().additive()
    });
    let (m, se) = mean_se(&vals);
    assert!((m - a / (a + k)).abs() < 3.0 * se, "{m} +- {se}");
}

#[test]
fn floor_rejects_nonnegative_values() {
    let p = ModelParams::default();
    assert!(stopping_line_with_floor(&p, 3.0, 0.0, 1, 100).is_err());
    assert!(stopping_line(&p, -1.0, 1, 100).is_err());
}

#[test]
fn arena_line_has_same_law_as_direct_line() {
    let p = ModelParams::default();
    let k = 1.0;
    let direct: Vec<f64> = replicas(4000, |r| stopping_line(&p, k, derive_seed(17, Purpose::Replica, r), 1 << 22).unwrap().count() as f64);
    let via_arena: Vec<f64> = replicas(4000, |r| {
        let seed = derive_seed(18, Purpose::Replica, r);
        let (_, arena) = simulate(&SimSpec::new(1.0, seed).with_uniform_checkpoints(0.1)).unwrap();
        arena_stopping_line(&arena, &p, k, seed, 1 << 22).unwrap().count() as f64
    });
    // Integer-valued: compare the count histograms.
    let a: Vec<usize> = direct.iter().map(|&x| x as usize).collect();
    let b: Vec<usize> = via_arena.iter().map(|&x| x as usize).collect();
    let chi = crate::stats::chi_square_two_sample(&a, None, &b, None, 5.0).unwrap();
    assert!(chi.p_value > 0.001, "{chi:?}");
}

#[test]
fn hit_times_are_first_passages() {
    let p = ModelParams::default();
    let res = stopping_line(&p, 3.0, 4, 1 << 20).unwrap();
    assert!(res.count() >= 1);
    assert!(res.hits.iter().all(|h| h.time > 0.0 && h.time.is_finite()));
    assert!((res.z() - 3.0 * (-3f64).exp() * res.count() as f64).abs() < 1e-15);
}
