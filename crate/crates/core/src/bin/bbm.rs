use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use bbm_tip::decoration::{
    sample_gamma, sample_l, sample_pool_decoration, sample_ppp, sample_y, DecorationConfig, Decorations, LimitVariant,
};
use bbm_tip::engine::simulate;
use bbm_tip::error::{Error, Result};
use bbm_tip::fkpp::{solve, wave_estimate, FkppSpec, FkppTable};
use bbm_tip::frontstats::{FrontRecord, Interval};
use bbm_tip::harness::{run_criterion, Context, CriterionResult, Suite, CRITERIA};
use bbm_tip::io::{exit_code, write_arena_jsonl, write_front_csv, write_snapshot_csv, RunConfig};
use bbm_tip::rng::{derive_seed, Purpose};

#[derive(Parser)]
#[command(name = "bbm", version, about = "Branching Brownian motion seen from its tip: simulate, solve, sample, verify")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; it must exist.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run of the particle system: arena, final snapshot and front records.
    Simulate(SimulateArgs),
    /// Solve the F-KPP equation and estimate the wave constants.
    Fkpp(FkppArgs),
    /// Draw limit objects.
    Sample(SampleArgs),
    /// Run acceptance criteria and write their reports.
    Verify(VerifyArgs),
    /// Summarise the reports written by `verify`.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    /// Enable pruning with this window.
    #[arg(long)]
    prune_delta: Option<f64>,
    /// Abort when more particles are alive.
    #[arg(long)]
    cap: Option<String>,
    #[arg(long)]
    checkpoint_step: Option<f64>,
    /// `C_B` used for the `m_t` column of front.csv; NaN when omitted.
    #[arg(long, allow_hyphen_values = true)]
    c_b: Option<f64>,
}

#[derive(Args)]
struct FkppArgs {
    /// Start from the long-horizon preset used for the wave constants.
    #[arg(long)]
    wave: bool,
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Args)]
struct SampleArgs {
    /// gamma, ppp, Y, Q, L or Lprime.
    #[arg(long)]
    variant: String,
    /// Level of the backbone for `gamma`.
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_hyphen_values = true, default_values_t = [-2.0, 2.0])]
    window: Vec<f64>,
    /// Number of draws.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Table written by `bbm fkpp`; solved inline when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Oldest births kept in decorations.
    #[arg(long, default_value_t = 8.0)]
    zeta: f64,
}

#[derive(Args)]
struct VerifyArgs {
    /// identities, pde, samplers, limits, properties or all.
    #[arg(long)]
    suite: Vec<String>,
    /// Run these criteria instead of whole suites.
    #[arg(long)]
    criterion: Vec<u8>,
    /// Multiplier on replica counts.
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `verify`; defaults to the output directory.
    #[arg(long)]
    dir: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::parse(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    for kv in &cli.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        return Ok(());
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("output directory {} does not exist", dir.display()),
    )))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    ensure_dir(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_simulate(mut cfg: RunConfig, args: &SimulateArgs) -> Result<i32> {
    if let Some(t) = args.t {
        cfg.t = t;
    }
    if let Some(d) = args.prune_delta {
        cfg.set("prune.enabled", "true")?;
        cfg.prune.window = d;
    }
    if let Some(c) = &args.cap {
        cfg.set("prune.cap", c)?;
    }
    if let Some(s) = args.checkpoint_step {
        cfg.checkpoint_step = s;
    }
    cfg.validate()?;
    let (snap, arena) = simulate(&cfg.sim_spec())?;
    let dir = cfg.output.clone();
    let c_b = args.c_b.unwrap_or(f64::NAN);

    let mut w = create(&dir, "arena.jsonl")?;
    write_arena_jsonl(&mut w, &arena, &cfg)?;
    w.flush()?;
    let mut w = create(&dir, "snapshot.csv")?;
    write_snapshot_csv(&mut w, &snap, &cfg)?;
    w.flush()?;

    let mut records = Vec::new();
    for g in 0..arena.grid().len() {
        let s = arena.checkpoint_snapshot(g).expect("grid index in range");
        if s.time < snap.time && !s.is_empty() {
            records.push(FrontRecord::new(&s, c_b)?);
        }
    }
    records.push(FrontRecord::new(&snap, c_b)?);
    let mut w = create(&dir, "front.csv")?;
    write_front_csv(&mut w, &records, &cfg)?;
    w.flush()?;
    let last = records.last().unwrap();
    println!("t = {}: {} particles, X_1 = {:.4}, M = {:.4}, Z = {:.4}", last.t, last.n, last.x1, last.m, last.z);
    Ok(0)
}

fn table_for(cfg: &RunConfig, path: Option<&Path>) -> Result<FkppTable> {
    match path {
        Some(p) => FkppTable::load(p).map_err(|e| match e {
            Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("table {}: {io}", p.display()))),
            e => e,
        }),
        None => solve(&cfg.fkpp_spec()),
    }
}

fn cmd_fkpp(mut cfg: RunConfig, args: &FkppArgs) -> Result<i32> {
    if args.wave {
        cfg.fkpp = FkppSpec::wave();
    }
    if let Some(dx) = args.dx {
        cfg.fkpp.dx = dx;
    }
    if let Some(dt) = args.dt {
        cfg.fkpp.dt = dt;
    }
    if let Some(h) = args.horizon {
        cfg.fkpp.horizon = h;
    }
    if let Some(s) = &args.scheme {
        cfg.set("fkpp.scheme", s)?;
    }
    cfg.validate()?;
    let dir = cfg.output.clone();
    ensure_dir(&dir)?;
    let table = solve(&cfg.fkpp_spec())?;
    table.save(&dir.join("table.bin"))?;

    let mut report = cfg.header();
    report["table"] = json!({ "file": "table.bin", "meta": table.meta, "stored_times": table.times().count() });
    let level_times: Vec<f64> = [10.0, 20.0, 40.0, 80.0].into_iter().filter(|&t| t <= table.horizon()).collect();
    match wave_estimate(&table, &level_times, &[0.1, 0.5, 0.9]) {
        Ok(w) => {
            println!("C = {:.4} (tail variation {:.3}, rms residual {:.4})", w.c(), w.tail.variation, w.tail.rms_residual);
            println!("C_B = {:.4}", w.c_b());
            report["constants"] = json!({
                "C": w.c(),
                "C_B": w.c_b(),
                "tail": w.tail,
                "centering": w.c_b,
                "calibration": w.calibration,
                "median_convention": { "C": w.median_tail.c, "C_B": w.median_c_b.c_b, "tail": w.median_tail },
                "levels": w.levels,
            });
        }
        Err(e) => {
            println!("no constants at horizon {}: {e}", table.horizon());
            report["constants"] = json!({ "error": e.to_string() });
        }
    }
    write_json(&dir, "fkpp.json", &report)?;
    Ok(0)
}

fn cmd_sample(cfg: RunConfig, args: &SampleArgs) -> Result<i32> {
    cfg.validate()?;
    let dir = cfg.output.clone();
    let window = Interval::new(args.window[0], args.window[1]);
    if !(window.lo <= window.hi) {
        return Err(Error::Config(format!("bad window [{}, {}]", window.lo, window.hi)));
    }
    let seed = |i: usize| derive_seed(cfg.seed, Purpose::Replica, i as u64);
    let variant = args.variant.as_str();
    let samples: Vec<Value> = match variant {
        "gamma" => (0..args.n)
            .map(|i| {
                let p = sample_gamma(args.b, cfg.proposal.dt, cfg.proposal.horizon, seed(i))?;
                Ok(json!({ "b": p.b, "t_b": p.t_b, "sup": p.sup(), "times": p.times, "values": p.values }))
            })
            .collect::<Result<_>>()?,
        "ppp" => (0..args.n)
            .map(|i| {
                let atoms: Vec<f64> = sample_ppp(window.hi, seed(i))?.into_iter().filter(|&x| x >= window.lo).collect();
                Ok(json!({ "atoms": atoms, "weight": 1.0 }))
            })
            .collect::<Result<_>>()?,
        "Y" | "y" => {
            let table = table_for(&cfg, args.table.as_deref())?;
            let pool = sample_y(&table, &cfg.proposal, args.n.max(2), cfg.seed)?;
            pool.backbones
                .iter()
                .map(|b| json!({ "b": b.b, "t_b": b.t_b, "path_seed": b.path_seed, "weight": b.importance }))
                .collect()
        }
        "Q" | "q" | "L" | "l" | "Lprime" | "lprime" | "L'" => {
            let table = table_for(&cfg, args.table.as_deref())?;
            let pool = sample_y(&table, &cfg.proposal, cfg.pool_size, cfg.seed)?;
            let dcfg = DecorationConfig::default().with_zeta(args.zeta);
            if matches!(variant, "Q" | "q") {
                let dcfg = dcfg.with_window(window.hi);
                (0..args.n)
                    .map(|i| {
                        let d = sample_pool_decoration(&pool, &cfg.params, &dcfg, seed(i))?;
                        Ok(json!({ "b": d.b, "births": d.births, "atoms": d.q.restrict(window).atoms(), "weight": 1.0 }))
                    })
                    .collect::<Result<_>>()?
            } else {
                let v: LimitVariant = variant.parse()?;
                (0..args.n)
                    .map(|i| {
                        let l = sample_l(window, Decorations::Pool(&pool), &cfg.params, &dcfg, v, seed(i))?;
                        Ok(json!({ "ppp": l.ppp_in_window().atoms(), "e": l.e, "atoms": l.atoms.atoms(), "weight": l.weight }))
                    })
                    .collect::<Result<_>>()?
            }
        }
        other => return Err(Error::Config(format!("unknown variant {other:?} (gamma, ppp, Y, Q, L, Lprime)"))),
    };
    let mut out = cfg.header();
    out["variant"] = json!(variant);
    out["window"] = json!([window.lo, window.hi]);
    out["samples"] = Value::Array(samples);
    let name = format!("sample_{}.json", variant.replace('\'', "prime"));
    write_json(&dir, &name, &out)?;
    println!("{} draws of {variant} written to {}", args.n, dir.join(name).display());
    Ok(0)
}

fn cmd_verify(mut cfg: RunConfig, args: &VerifyArgs) -> Result<i32> {
    if !args.suite.is_empty() {
        cfg.suites = args.suite.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    }
    if let Some(s) = args.scale {
        cfg.scale = s;
    }
    cfg.validate()?;
    let ids: Vec<u8> = if args.criterion.is_empty() {
        CRITERIA
            .iter()
            .filter(|c| cfg.suites.iter().any(|&s| s == Suite::All || s == c.suite))
            .map(|c| c.id)
            .collect()
    } else {
        args.criterion.clone()
    };
    let dir = cfg.output.clone();
    ensure_dir(&dir)?;
    let reports = dir.join("reports");
    std::fs::create_dir_all(&reports)?;

    let ctx = Context::from_config(&cfg);
    let mut results: Vec<CriterionResult> = Vec::new();
    let mut errors = Vec::new();
    for id in ids {
        match run_criterion(id, &ctx) {
            Ok(r) => {
                println!("{}", r.line());
                let mut v = serde_json::to_value(&r.report)?;
                v["config"] = json!({ "run": cfg.to_json(), "experiment": r.report.config });
                v["criterion"] = json!({ "id": r.criterion.id, "name": r.criterion.name, "passed": r.passed });
                write_json(&reports, &format!("criterion_{id:02}.json"), &v)?;
                if !r.report.raw.is_empty() {
                    let mut w = create(&reports, &format!("criterion_{id:02}.csv"))?;
                    w.write_all(cfg.comment_header().as_bytes())?;
                    w.write_all(r.report.raw_csv().as_bytes())?;
                    w.flush()?;
                }
                results.push(r);
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                println!("criterion {id:>2} ERROR: {e}");
                errors.push((id, e.to_string()));
            }
        }
    }
    let failed = results.iter().filter(|r| !r.passed).count() + errors.len();
    let mut summary = cfg.header();
    summary["criteria"] = json!(results
        .iter()
        .map(|r| json!({ "id": r.criterion.id, "name": r.criterion.name, "passed": r.passed, "line": r.line() }))
        .chain(errors.iter().map(|(id, e)| json!({ "id": id, "passed": false, "error": e })))
        .collect::<Vec<_>>());
    summary["failed"] = json!(failed);
    write_json(&dir, "summary.json", &summary)?;
    let mut w = create(&dir, "summary.txt")?;
    w.write_all(cfg.comment_header().as_bytes())?;
    for r in &results {
        writeln!(w, "{}", r.line())?;
    }
    for (id, e) in &errors {
        writeln!(w, "criterion {id:>2} ERROR: {e}")?;
    }
    w.flush()?;
    println!("{} of {} criteria passed", results.len() + errors.len() - failed, results.len() + errors.len());
    Ok(if failed == 0 { 0 } else { 1 })
}

fn cmd_report(cfg: RunConfig, args: &ReportArgs) -> Result<i32> {
    let dir = args.dir.clone().unwrap_or(cfg.output);
    let text = std::fs::read_to_string(dir.join("summary.json"))?;
    let summary: Value = serde_json::from_str(&text)?;
    println!("version: {}", summary["version"].as_str().unwrap_or("?"));
    let criteria = summary["criteria"].as_array().cloned().unwrap_or_default();
    for c in &criteria {
        let id = c["id"].as_u64().unwrap_or(0);
        match c.get("line").and_then(Value::as_str) {
            Some(line) => println!("{line}"),
            None => println!("criterion {id:>2} ERROR: {}", c["error"].as_str().unwrap_or("?")),
        }
        let path = dir.join("reports").join(format!("criterion_{id:02}.json"));
        if let Ok(t) = std::fs::read_to_string(&path) {
            let r: Value = serde_json::from_str(&t)?;
            for e in r["estimates"].as_array().into_iter().flatten() {
                let se = e["se"].as_f64().map(|s| format!(" ± {s:.4}")).unwrap_or_default();
                println!("    {} = {:.6}{se}", e["name"].as_str().unwrap_or("?"), e["value"].as_f64().unwrap_or(f64::NAN));
            }
        }
    }
    let failed = summary["failed"].as_u64().unwrap_or(0);
    println!("{} of {} criteria passed", criteria.len() as u64 - failed, criteria.len());
    Ok(if failed == 0 { 0 } else { 1 })
}

fn run(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(cfg, a),
        Command::Fkpp(a) => cmd_fkpp(cfg, a),
        Command::Sample(a) => cmd_sample(cfg, a),
        Command::Verify(a) => cmd_verify(cfg, a),
        Command::Report(a) => cmd_report(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
