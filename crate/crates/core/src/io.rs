//! Run configuration and file formats.
//!
//! A [`RunConfig`] is a flat `key = value` file with dotted keys; command-line
//! flags are applied on top with [`RunConfig::set`]. Every output file starts
//! with the toolkit version and the effective configuration: as `#` comment
//! lines in CSV, as a leading record in line-delimited JSON, and as fields of
//! JSON reports.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::decoration::ProposalSpec;
use crate::engine::{LineageArena, ModelParams, Node, NodeId, PopulationSnapshot, PruneConfig, SimSpec};
use crate::error::{Error, Result};
use crate::fkpp::{FkppSpec, Scheme};
use crate::frontstats::FrontRecord;
use crate::harness::Suite;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub params: ModelParams,
    pub prune: PruneConfig,
    /// Horizon of `simulate`.
    pub t: f64,
    /// Checkpoint spacing of `simulate`; 0 records none.
    pub checkpoint_step: f64,
    pub fkpp: FkppSpec,
    pub proposal: ProposalSpec,
    pub pool_size: usize,
    pub suites: Vec<Suite>,
    /// Multiplier on the replica counts of `verify`.
    pub scale: f64,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            params: ModelParams::default(),
            prune: PruneConfig::default(),
            t: 5.0,
            checkpoint_step: 0.0,
            fkpp: FkppSpec::default(),
            proposal: ProposalSpec::default(),
            pool_size: 10_000,
            suites: vec![Suite::All],
            scale: 1.0,
            output: PathBuf::from("out"),
        }
    }
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Identities => "identities",
        Suite::Pde => "pde",
        Suite::Samplers => "samplers",
        Suite::Limits => "limits",
        Suite::Properties => "properties",
        Suite::All => "all",
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Explicit => "explicit",
        Scheme::SemiImplicit => "semi-implicit",
        Scheme::Strang => "strang",
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} = {value:?}")))
}

impl RunConfig {
    /// All keys in echo order.
    pub const KEYS: [&'static str; 23] = [
        "seed",
        "model.lambda",
        "model.rho",
        "model.sigma",
        "prune.enabled",
        "prune.window",
        "prune.cap",
        "prune.sync_interval",
        "simulate.t",
        "simulate.checkpoint_step",
        "fkpp.dx",
        "fkpp.dt",
        "fkpp.half_width",
        "fkpp.horizon",
        "fkpp.scheme",
        "sampler.b_max",
        "sampler.bins",
        "sampler.dt",
        "sampler.horizon",
        "sampler.pool",
        "verify.suites",
        "verify.scale",
        "output.dir",
    ];

    fn value(&self, key: &str) -> String {
        match key {
            "seed" => self.seed.to_string(),
            "model.lambda" => format!("{:?}", self.params.lambda),
            "model.rho" => format!("{:?}", self.params.rho),
            "model.sigma" => format!("{:?}", self.params.sigma),
            "prune.enabled" => self.prune.enabled.to_string(),
            "prune.window" => format!("{:?}", self.prune.window),
            "prune.cap" => self.prune.cap.to_string(),
            "prune.sync_interval" => format!("{:?}", self.prune.sync_interval),
            "simulate.t" => format!("{:?}", self.t),
            "simulate.checkpoint_step" => format!("{:?}", self.checkpoint_step),
            "fkpp.dx" => format!("{:?}", self.fkpp.dx),
            "fkpp.dt" => format!("{:?}", self.fkpp.dt),
            "fkpp.half_width" => format!("{:?}", self.fkpp.half_width),
            "fkpp.horizon" => format!("{:?}", self.fkpp.horizon),
            "fkpp.scheme" => scheme_name(self.fkpp.scheme).to_string(),
            "sampler.b_max" => format!("{:?}", self.proposal.b_max),
            "sampler.bins" => self.proposal.bins.to_string(),
            "sampler.dt" => format!("{:?}", self.proposal.dt),
            "sampler.horizon" => format!("{:?}", self.proposal.horizon),
            "sampler.pool" => self.pool_size.to_string(),
            "verify.suites" => self.suites.iter().map(|&s| suite_name(s)).collect::<Vec<_>>().join(","),
            "verify.scale" => format!("{:?}", self.scale),
            "output.dir" => self.output.display().to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "model.lambda" => self.params.lambda = parse(key, v)?,
            "model.rho" => self.params.rho = parse(key, v)?,
            "model.sigma" => self.params.sigma = parse(key, v)?,
            "prune.enabled" => self.prune.enabled = parse(key, v)?,
            "prune.window" => self.prune.window = parse(key, v)?,
            "prune.cap" => self.prune.cap = parse(key, &v.replace('_', ""))?,
            "prune.sync_interval" => self.prune.sync_interval = parse(key, v)?,
            "simulate.t" => self.t = parse(key, v)?,
            "simulate.checkpoint_step" => self.checkpoint_step = parse(key, v)?,
            "fkpp.dx" => self.fkpp.dx = parse(key, v)?,
            "fkpp.dt" => self.fkpp.dt = parse(key, v)?,
            "fkpp.half_width" => self.fkpp.half_width = parse(key, v)?,
            "fkpp.horizon" => self.fkpp.horizon = parse(key, v)?,
            "fkpp.scheme" => self.fkpp.scheme = v.parse()?,
            "sampler.b_max" => self.proposal.b_max = parse(key, v)?,
            "sampler.bins" => self.proposal.bins = parse(key, v)?,
            "sampler.dt" => self.proposal.dt = parse(key, v)?,
            "sampler.horizon" => self.proposal.horizon = parse(key, v)?,
            "sampler.pool" => self.pool_size = parse(key, v)?,
            "verify.suites" => {
                self.suites = v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?
            }
            "verify.scale" => self.scale = parse(key, v)?,
            "output.dir" => self.output = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Parses a `key = value` file; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {line:?}", n + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// The configuration as `key = value` lines; [`RunConfig::parse`] inverts it.
    pub fn echo(&self) -> String {
        Self::KEYS.iter().map(|k| format!("{k} = {}\n", self.value(k))).collect()
    }

    pub fn to_json(&self) -> Value {
        let map: serde_json::Map<String, Value> = Self::KEYS.iter().map(|k| (k.to_string(), Value::String(self.value(k)))).collect();
        Value::Object(map)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.prune.validate()?;
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::Config(format!("simulate.t must be finite and nonnegative, got {}", self.t)));
        }
        if !(self.checkpoint_step >= 0.0 && self.checkpoint_step.is_finite()) {
            return Err(Error::Config(format!("simulate.checkpoint_step must be nonnegative, got {}", self.checkpoint_step)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("verify.scale must be positive, got {}", self.scale)));
        }
        if self.pool_size < 2 {
            return Err(Error::Config("sampler.pool must be at least 2".into()));
        }
        self.proposal.validate()?;
        let fk = FkppSpec { params: self.params, ..self.fkpp.clone() };
        fk.validate()
    }

    pub fn sim_spec(&self) -> SimSpec {
        let spec = SimSpec::new(self.t, self.seed).with_params(self.params).with_prune(self.prune);
        if self.checkpoint_step > 0.0 {
            spec.with_uniform_checkpoints(self.checkpoint_step)
        } else {
            spec
        }
    }

    pub fn fkpp_spec(&self) -> FkppSpec {
        FkppSpec { params: self.params, ..self.fkpp.clone() }
    }

    /// `{"version": ..., "config": {...}}`.
    pub fn header(&self) -> Value {
        json!({ "version": crate::VERSION, "config": self.to_json() })
    }

    /// Version and configuration as `# ` comment lines.
    pub fn comment_header(&self) -> String {
        let mut s = format!("# version = {}\n", crate::VERSION);
        for line in self.echo().lines() {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s
    }
}

/// Process exit code for an error: 2 for configuration, 3 for resources and I/O, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::Resource { .. } | Error::Io(_) => 3,
        _ => 1,
    }
}

/// `node,position` rows sorted by position.
pub fn write_snapshot_csv(w: &mut impl Write, snapshot: &PopulationSnapshot, cfg: &RunConfig) -> Result<()> {
    w.write_all(cfg.comment_header().as_bytes())?;
    writeln!(w, "# t = {:?}, pruned = {}", snapshot.time, snapshot.pruned)?;
    writeln!(w, "node,position")?;
    for a in &snapshot.atoms {
        writeln!(w, "{},{:?}", a.node, a.position)?;
    }
    Ok(())
}

pub fn write_front_csv(w: &mut impl Write, records: &[FrontRecord], cfg: &RunConfig) -> Result<()> {
    w.write_all(cfg.comment_header().as_bytes())?;
    writeln!(w, "{}", FrontRecord::CSV_HEADER)?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct NodeLine {
    id: NodeId,
    #[serde(flatten)]
    node: Node,
}

/// Line-delimited JSON: a header record, one record per node, then one
/// `{"checkpoint": [node, grid index, position]}` record per checkpoint sample.
pub fn write_arena_jsonl(w: &mut impl Write, arena: &LineageArena, cfg: &RunConfig) -> Result<()> {
    let mut header = cfg.header();
    header["grid"] = json!(arena.grid());
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for (i, node) in arena.nodes().iter().enumerate() {
        let line = NodeLine { id: NodeId(i as u32), node: node.clone() };
        writeln!(w, "{}", serde_json::to_string(&line)?)?;
    }
    for i in 0..arena.len() {
        let id = NodeId(i as u32);
        for (s, x) in arena.checkpoints(id) {
            let g = arena.grid_index(s).expect("checkpoint on the grid");
            writeln!(w, "{}", serde_json::to_string(&json!({ "checkpoint": [i, g, x] }))?)?;
        }
    }
    Ok(())
}

/// Reads an arena written by [`write_arena_jsonl`]; returns it with the header record.
pub fn read_arena_jsonl(r: impl BufRead) -> Result<(LineageArena, Value)> {
    let mut lines = r.lines();
    let header: Value = match lines.next() {
        Some(l) => serde_json::from_str(&l?)?,
        None => return Err(Error::Config("empty arena file".into())),
    };
    let grid: Vec<f64> = serde_json::from_value(header.get("grid").cloned().unwrap_or(json!([])))?;
    let mut nodes = Vec::new();
    let mut checkpoints = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line)?;
        if let Some(c) = v.get("checkpoint") {
            let (n, g, x): (u32, usize, f64) = serde_json::from_value(c.clone())?;
            checkpoints.push((NodeId(n), g, x));
        } else {
            let nl: NodeLine = serde_json::from_value(v)?;
            if nl.id.index() != nodes.len() {
                return Err(Error::Config(format!("arena record {} out of order", nl.id)));
            }
            nodes.push(nl.node);
        }
    }
    Ok((LineageArena::from_parts(nodes, grid, checkpoints)?, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::simulate;
    use proptest::prelude::*;

    #[test]
    fn echo_parse_is_a_fixed_point() {
        let mut cfg = RunConfig::default();
        cfg.set("seed", "42").unwrap();
        cfg.set("prune.enabled", "true").unwrap();
        cfg.set("prune.cap", "10_000_000").unwrap();
        cfg.set("fkpp.scheme", "semi-implicit").unwrap();
        cfg.set("verify.suites", "identities, limits").unwrap();
        let text = cfg.echo();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.echo(), text);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::parse("nope = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("seed = x"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("just text"), Err(Error::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.t = -1.0;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(RunConfig::default().validate().is_ok());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Resource { live: 2, cap: 1 }), 3);
        assert_eq!(exit_code(&Error::Diagnostics("x".into())), 1);
    }

    #[test]
    fn arena_round_trip() {
        let cfg = RunConfig { t: 3.0, checkpoint_step: 0.5, ..RunConfig::default() };
        let (snap, arena) = simulate(&cfg.sim_spec()).unwrap();
        let mut buf = Vec::new();
        write_arena_jsonl(&mut buf, &arena, &cfg).unwrap();
        let (back, header) = read_arena_jsonl(&buf[..]).unwrap();
        assert_eq!(back, arena);
        assert_eq!(header["version"], crate::VERSION);
        let mut csv = Vec::new();
        write_snapshot_csv(&mut csv, &snap, &cfg).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("# version = "));
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), snap.len() + 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn numeric_settings_round_trip(seed in any::<u64>(), t in 0.0f64..100.0, w in 0.1f64..50.0, scale in 0.01f64..10.0) {
            let mut cfg = RunConfig::default();
            cfg.seed = seed;
            cfg.t = t;
            cfg.prune.window = w;
            cfg.scale = scale;
            let back = RunConfig::parse(&cfg.echo()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
