use super::*;
use crate::stats::normal_cdf;

fn short(horizon: f64) -> FkppTable {
    solve(&FkppSpec::default().with_horizon(horizon)).unwrap()
}

#[test]
fn pure_drift_diffusion_matches_gaussian_cdf() {
    let mut spec = FkppSpec::default().with_horizon(1.0).with_grid(0.01, 0.005);
    spec.reaction = false;
    spec.half_width = 20.0;
    let table = solve(&spec).unwrap();
    let s = table.slice(1.0).unwrap();
    let mut err: f64 = 0.0;
    for (i, &u) in s.values.iter().enumerate() {
        let x = s.x(i, table.dx());
        err = err.max((u - normal_cdf((x - 2.0) / 2f64.sqrt())).abs());
    }
    assert!(err < 1e-3, "sup error {err}");
    for scheme in [Scheme::SemiImplicit, Scheme::Explicit] {
        let mut spec = spec.clone().with_scheme(scheme);
        if scheme == Scheme::Explicit {
            spec.dt = 0.5 * spec.dx * spec.dx / 2.0;
        }
        let table = solve(&spec).unwrap();
        let s = table.slice(1.0).unwrap();
        let err = s
            .values
            .iter()
            .enumerate()
            .map(|(i, &u)| (u - normal_cdf((s.x(i, table.dx()) - 2.0) / 2f64.sqrt())).abs())
            .fold(0.0, f64::max);
        assert!(err < 5e-3, "{scheme:?}: {err}");
    }
}

#[test]
fn table_invariants_hold() {
    let table = short(20.0);
    for s in &table.slices {
        assert!(s.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(s.values.iter().all(|&u| (0.0..=1.0).contains(&u)));
        assert!(s.values[0] < 1e-8, "t = {}", s.t);
        assert!(*s.values.last().unwrap() > 1.0 - 1e-8);
    }
}

#[test]
fn level_positions_and_lookup() {
    let table = short(10.0);
    for t in [0.5, 1.0, 3.0, 10.0] {
        let m = table.level_position(t, 0.5).unwrap();
        assert!((table.g(t, m).unwrap() - 0.5).abs() < 1e-12);
        assert!(table.level_position(t, 0.99).unwrap() >= m);
        assert!(table.level_position(t, 0.01).unwrap() <= m);
    }
    assert!(table.level_position(3.0, 1.0).is_err());
    assert!(table.level_position(3.01234, 0.5).is_err());
    assert!(table.g(11.0, 0.0).is_err());

    let s = table.slice(3.0).unwrap();
    let i = 1234;
    assert_eq!(table.g(3.0, s.x(i, table.dx())).unwrap(), s.values[i]);

    let below = table.lookup(3.0, s.x0 - 5.0).unwrap();
    assert!(below.extrapolated);
    assert!(below.value >= 0.0 && below.value < 1e-20);
    assert_eq!(table.g(3.0, 1e6).unwrap(), 1.0);

    let mut r = 12345u64;
    let mut next = || {
        r = r.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (r >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..1000 {
        let t = 10.0 * next();
        let x1 = -30.0 + 40.0 * next();
        let x2 = x1 + 5.0 * next();
        assert!(table.g(t, x1).unwrap() <= table.g(t, x2).unwrap() + 1e-15);
    }
}

#[test]
fn comparison_and_translation() {
    let base = short(5.0);
    let mut spec = FkppSpec::default().with_horizon(5.0);
    spec.initial_shift = 0.5;
    let shifted = solve(&spec).unwrap();
    for t in [0.5, 2.0, 5.0] {
        for x in [-6.0, -2.0, 0.0, 0.3, 1.0, 3.0] {
            let a = base.g(t, x).unwrap();
            let b = shifted.g(t, x).unwrap();
            assert!(a >= b, "t {t} x {x}");
            let c = base.g(t, x - 0.5).unwrap();
            assert!((b - c).abs() < 1e-9, "translation t {t} x {x}: {b} vs {c}");
        }
    }
}

#[test]
fn refinement_matches_scheme_order() {
    let probe = |scheme: Scheme, dx: f64, dt: f64| -> Vec<f64> {
        let mut spec = FkppSpec::default().with_horizon(2.0).with_grid(dx, dt).with_scheme(scheme);
        spec.half_width = 30.0;
        spec.storage = StoragePlan(vec![(f64::INFINITY, 1.0)]);
        let table = solve(&spec).unwrap();
        [-4.0, -2.0, -1.0, 0.0, 0.5, 1.0, 2.0].iter().map(|&x| table.g(2.0, x).unwrap()).collect()
    };
    for (scheme, order, dx, dt) in [(Scheme::Strang, 2.0, 0.08, 0.04), (Scheme::SemiImplicit, 1.0, 0.08, 0.04)] {
        let a = probe(scheme, dx, dt);
        let b = probe(scheme, dx / 2.0, dt / 2.0);
        let c = probe(scheme, dx / 4.0, dt / 4.0);
        let e1 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let e2 = b.iter().zip(&c).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let predicted = 2f64.powf(order);
        assert!(e1 / e2 > predicted / 4.0, "{scheme:?}: e1 {e1} e2 {e2}");
        assert!(e1 / e2 < predicted * 4.0, "{scheme:?}: e1 {e1} e2 {e2}");
    }
}

#[test]
fn wave_profiles_converge_monotonically() {
    let table = short(80.0);
    let w: Vec<WaveProfile> = [10.0, 20.0, 40.0, 80.0].iter().map(|&t| wave_profile(&table, t).unwrap()).collect();
    for p in &w {
        assert!((p.eval(0.0) - 0.5).abs() < 1e-12);
    }
    let left: Vec<f64> = w[..3].iter().map(|p| p.eval(-3.0)).collect();
    let right: Vec<f64> = w[..3].iter().map(|p| p.eval(3.0)).collect();
    assert!(left.windows(2).all(|v| v[1] >= v[0]), "{left:?}");
    assert!(right.windows(2).all(|v| v[1] <= v[0]), "{right:?}");
    let dist = |a: &WaveProfile, b: &WaveProfile| (-400..=400).map(|i| (a.eval(i as f64 * 0.05) - b.eval(i as f64 * 0.05)).abs()).fold(0.0, f64::max);
    assert!(dist(&w[2], &w[3]) < dist(&w[0], &w[1]));
}

#[test]
fn tail_fit_on_synthetic_profiles() {
    let exact = WaveProfile::from_fn(-12.0, 0.01, 1200, |x| 0.7 * x.abs() * x.exp());
    let fit = tail_constant(&exact, -8.0, -4.0).unwrap();
    assert!((fit.c - 0.7).abs() < 1e-6);
    assert!(fit.variation < 1e-9 && !fit.flagged);
    let pure = tail_fit(&exact, -8.0, -4.0, TailAnsatz::Exponential).unwrap();
    assert!(pure.variation > 0.3 && pure.flagged, "{pure:?}");

    let shifted = WaveProfile::from_fn(-30.0, 0.01, 3000, |x| (2.0 * x.abs() + 5.0) * x.exp());
    let cal = calibrate_tail(&shifted, 1.0, -16.0, -8.0).unwrap();
    assert!((cal.slope - 2.0).abs() < 1e-9 && (cal.intercept - 5.0).abs() < 1e-9);
    assert!(tail_constant(&shifted, -8.0, -4.0).unwrap().flagged);
}

#[test]
fn serialization_round_trips() {
    let mut spec = FkppSpec::default().with_horizon(1.0);
    spec.half_width = 10.0;
    spec.storage = StoragePlan(vec![(f64::INFINITY, 0.25)]);
    let table = solve(&spec).unwrap();
    let mut buf = Vec::new();
    table.write_binary(&mut buf).unwrap();
    let back = FkppTable::read_binary(&mut buf.as_slice()).unwrap();
    assert_eq!(back, table);
    let mut csv = Vec::new();
    table.write_csv(&mut csv, None, None).unwrap();
    let back = FkppTable::read_csv(&mut csv.as_slice()).unwrap();
    assert_eq!(back, table);
    assert!(FkppTable::read_binary(&mut &b"garbage!"[..]).is_err());
}
