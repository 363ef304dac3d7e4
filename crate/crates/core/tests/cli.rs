use std::path::Path;
use std::process::{Command, Output};

fn bbm(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbm"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("bbm runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["simulate", "--t", "5", "--seed", "7", "--checkpoint-step", "0.5"];
    assert_eq!(code(&bbm(dir.path(), &args)), 0);
    let first: Vec<Vec<u8>> =
        ["arena.jsonl", "snapshot.csv", "front.csv"].iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    assert_eq!(code(&bbm(dir.path(), &args)), 0);
    for (f, bytes) in ["arena.jsonl", "snapshot.csv", "front.csv"].iter().zip(&first) {
        assert_eq!(&std::fs::read(dir.path().join(f)).unwrap(), bytes, "{f}");
    }
    for f in ["snapshot.csv", "front.csv"] {
        let text = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.starts_with("# version = bbm-tip"));
        assert!(text.contains("# seed = 7"));
    }
    let arena = std::fs::read_to_string(dir.path().join("arena.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(arena.lines().next().unwrap()).unwrap();
    assert_eq!(header["config"]["simulate.t"], "5.0");
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bbm(dir.path(), &["simulate", "--t", "-1"])), 2);
    assert_eq!(code(&bbm(dir.path(), &["--set", "no.such.key=1", "simulate"])), 2);
    assert_eq!(code(&bbm(dir.path(), &["verify", "--suite", "nonsense"])), 2);
    assert_eq!(code(&bbm(dir.path(), &["sample", "--variant", "nonsense"])), 2);
    let over = bbm(dir.path(), &["simulate", "--t", "30", "--prune-delta", "10", "--cap", "1_000"]);
    assert_eq!(code(&over), 3);
    assert!(String::from_utf8_lossy(&over.stderr).contains("resource"));
    assert_eq!(code(&bbm(&dir.path().join("missing"), &["fkpp", "--horizon", "1"])), 3);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "seed = 3\nsimulate.t = 2.0\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_bbm"))
        .args(["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "4", "simulate"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(dir.path().join("snapshot.csv")).unwrap();
    assert!(text.contains("# seed = 4"));
    assert!(text.contains("# simulate.t = 2.0"));
}

#[test]
fn fkpp_then_sample() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&bbm(d, &["fkpp", "--horizon", "40", "--dx", "0.04", "--dt", "0.02"])), 0);
    let report = json(&d.join("fkpp.json"));
    assert_eq!(report["config"]["fkpp.horizon"], "40.0");
    assert!(report["table"]["stored_times"].as_u64().unwrap() > 0);

    assert_eq!(code(&bbm(d, &["sample", "--variant", "gamma", "--b", "2", "--n", "5"])), 0);
    for s in json(&d.join("sample_gamma.json"))["samples"].as_array().unwrap() {
        if !s["t_b"].is_null() {
            assert_eq!(s["sup"], 2.0);
        }
    }

    let table = d.join("table.bin");
    let table = table.to_str().unwrap();
    let common = ["--set", "sampler.pool=200", "--n", "5", "--table", table];
    assert_eq!(code(&bbm(d, &[&["sample", "--variant", "Q"][..], &common].concat())), 0);
    for s in json(&d.join("sample_Q.json"))["samples"].as_array().unwrap() {
        assert_eq!(s["atoms"][0], 0.0);
    }
    assert_eq!(code(&bbm(d, &[&["sample", "--variant", "L", "--window", "-2", "2"][..], &common].concat())), 0);
    for s in json(&d.join("sample_L.json"))["samples"].as_array().unwrap() {
        assert!(s["atoms"].as_array().unwrap().iter().all(|x| (-2.0..=2.0).contains(&x.as_f64().unwrap())));
    }
    let missing = bbm(d, &["sample", "--variant", "L", "--table", "/nonexistent/table.bin"]);
    assert_eq!(code(&missing), 3);
}

#[test]
fn verify_and_report_property_suite() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bbm(d, &["--set", "sampler.pool=500", "--set", "fkpp.horizon=40", "verify", "--suite", "properties"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("criterion 12 PASS"));
    let summary = json(&d.join("summary.json"));
    assert_eq!(summary["failed"], 0);
    let report = json(&d.join("reports/criterion_12.json"));
    assert_eq!(report["criterion"]["passed"], true);
    assert_eq!(report["config"]["run"]["sampler.pool"], "500");
    let r = bbm(d, &["report"]);
    assert_eq!(code(&r), 0);
    assert!(String::from_utf8_lossy(&r.stdout).contains("1 of 1 criteria passed"));
}
