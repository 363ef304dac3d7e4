use super::*;
use crate::frontstats::Interval;

#[test]
fn verdicts_decide_the_report() {
    let mut r = ExperimentReport::new("x", serde_json::json!({ "seed": 1 }));
    r.estimate("a", 1.0, 0.1);
    r.exact("b", 2.0);
    r.verdict("ok", true, "exact", "fine".into());
    assert!(r.passed());
    r.verdict("bad", false, "exact", "not fine".into());
    assert!(!r.passed());
    assert!(r.summary().contains("FAIL x/bad"));
    assert_eq!(r.get("b").unwrap().se, None);
    let back: ExperimentReport = serde_json::from_str(&r.to_json()).unwrap();
    assert_eq!(back.verdicts, r.verdicts);
    assert_eq!(back.version, crate::VERSION);
}

#[test]
fn raw_columns_as_csv() {
    let mut r = ExperimentReport::new("x", serde_json::Value::Null);
    r.column("m", vec![1.0, 2.5]);
    assert_eq!(r.raw_csv(), "column,index,value\nm,0,1.0\nm,1,2.5\n");
}

#[test]
fn suites_parse_and_cover_every_criterion() {
    for s in ["identities", "pde", "samplers", "limits", "properties", "all"] {
        assert!(s.parse::<Suite>().is_ok());
    }
    assert!(matches!("nope".parse::<Suite>(), Err(crate::error::Error::Config(_))));
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.id).collect();
    assert_eq!(ids, (1..=12).collect::<Vec<_>>());
    assert!(run_criterion(13, &Context::new(1)).is_err());
}

#[test]
fn replicate_keeps_index_order() {
    let v = replicate(100, |i| Ok(i * 2)).unwrap();
    assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
}

#[test]
fn many_to_one_is_exact_at_time_zero() {
    let r = many_to_one_check(0.0, 10, 3).unwrap();
    assert!(r.passed(), "{}", r.summary());
    assert!(r.estimates.iter().all(|e| e.exact));
}

#[test]
fn many_to_one_is_reproducible() {
    let a = many_to_one_check(1.0, 200, 5).unwrap();
    let b = many_to_one_check(1.0, 200, 5).unwrap();
    assert_eq!(a, b);
    assert!(a.passed(), "{}", a.summary());
}

#[test]
fn gamma_first_passage_small() {
    let r = gamma_first_passage(1.0, 1e-2, 5.0, 500, 2).unwrap();
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn spinal_identity_degenerate_point() {
    // F ≡ 1 and f ≡ 0: the direct side is exactly 1.
    let table = crate::fkpp::solve(&crate::fkpp::FkppSpec::default().with_horizon(2.0)).unwrap();
    let f = SpinalFunctional { barrier: None, ..SpinalFunctional::default() };
    let r = spinal_identity_check(&table, 1.0, &f, 2000, 4).unwrap();
    assert_eq!(r.get("lhs").unwrap().value, 1.0);
    assert!(r.get("lhs").unwrap().exact);
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn spinal_identity_with_branch_weight() {
    let table = crate::fkpp::solve(&crate::fkpp::FkppSpec::default().with_horizon(2.0)).unwrap();
    let f = SpinalFunctional {
        barrier: None,
        weight: BackwardWeight::Window { zeta: 0.5 },
        alphas: vec![1.0],
        sets: vec![Interval::new(0.0, 1.0)],
        inner: 200,
        batches: 4,
        ..SpinalFunctional::default()
    };
    let r = spinal_identity_check(&table, 1.0, &f, 4000, 6).unwrap();
    assert!(r.get("lhs").unwrap().value < 1.0);
    assert!(r.passed(), "{}", r.summary());
}
