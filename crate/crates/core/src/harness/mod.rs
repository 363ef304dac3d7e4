//! Experiments that confront the simulator, the PDE solver and the limit
//! samplers with exact finite-time identities and with limit theorems at
//! desk scale. Every experiment returns an [`ExperimentReport`] whose
//! verdicts are pure functions of the reported statistics.

mod criteria;
mod identities;
mod limits;
mod samplers;

pub use crate::stats;
pub use criteria::{decoration_report, property_checks, run_criterion, run_suite, Criterion, CriterionResult, Suite, CRITERIA};
pub use identities::{
    bramson_centering, many_to_one_check, pde_crosscheck, spinal_identity_check, tail_constant_check, BackwardWeight,
    SpinalFunctional,
};
pub use limits::{decoration_comparison, extremal_comparison, genealogy_gap, record_poissonization, ExtremalOptions};
pub use samplers::{gamma_first_passage, laplace_ratio_check, nested_kernel, thinning_check, KernelTable, LaplaceOptions};

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::decoration::{sample_y, BackbonePool, ProposalSpec};
use crate::error::Result;
use crate::fkpp::{solve, FkppSpec, FkppTable, WaveEstimate};

/// A reported quantity; `se` is `None` only for exact values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestStat {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    /// The tolerance the statistic was held to, fixed before running.
    pub tolerance: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub version: String,
    pub config: Value,
    pub estimates: Vec<Estimate>,
    pub tests: Vec<TestStat>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    /// Raw per-replica values, written as companion CSV rather than JSON.
    #[serde(skip)]
    pub raw: Vec<(String, Vec<f64>)>,
}

impl ExperimentReport {
    pub fn new(name: &str, config: Value) -> Self {
        ExperimentReport {
            name: name.into(),
            version: crate::VERSION.into(),
            config,
            estimates: Vec::new(),
            tests: Vec::new(),
            verdicts: Vec::new(),
            notes: Vec::new(),
            raw: Vec::new(),
        }
    }

    pub fn estimate(&mut self, name: &str, value: f64, se: f64) {
        self.estimates.push(Estimate { name: name.into(), value, se: Some(se), exact: false });
    }

    pub fn exact(&mut self, name: &str, value: f64) {
        self.estimates.push(Estimate { name: name.into(), value, se: None, exact: true });
    }

    pub fn test(&mut self, name: &str, statistic: f64, p_value: Option<f64>) {
        self.tests.push(TestStat { name: name.into(), statistic, p_value });
    }

    pub fn verdict(&mut self, name: &str, passed: bool, tolerance: &str, detail: String) {
        self.verdicts.push(Verdict { name: name.into(), passed, tolerance: tolerance.into(), detail });
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn column(&mut self, name: &str, values: Vec<f64>) {
        self.raw.push((name.into(), values));
    }

    /// Raw values in long format: `column,index,value`.
    pub fn raw_csv(&self) -> String {
        let mut s = String::from("column,index,value\n");
        for (name, values) in &self.raw {
            for (i, v) in values.iter().enumerate() {
                s.push_str(&format!("{name},{i},{v:?}\n"));
            }
        }
        s
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Estimate> {
        self.estimates.iter().find(|e| e.name == name)
    }

    pub fn get_test(&self, name: &str) -> Option<&TestStat> {
        self.tests.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// One line per verdict.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for v in &self.verdicts {
            s.push_str(&format!(
                "{} {}/{}: {} [{}]\n",
                if v.passed { "PASS" } else { "FAIL" },
                self.name,
                v.name,
                v.detail,
                v.tolerance
            ));
        }
        s
    }
}

/// Shared, lazily built artifacts: the working table, the converged wave and a backbone pool.
pub struct Context {
    pub seed: u64,
    pub table_spec: FkppSpec,
    pub wave_spec: FkppSpec,
    pub proposal: ProposalSpec,
    pub pool_size: usize,
    /// Multiplier on the replica counts of the criteria.
    pub scale: f64,
    table: OnceLock<FkppTable>,
    wave: OnceLock<(FkppTable, WaveEstimate)>,
    pool: OnceLock<BackbonePool>,
}

impl Context {
    pub fn new(seed: u64) -> Self {
        Context {
            seed,
            table_spec: FkppSpec::default(),
            wave_spec: FkppSpec::wave(),
            proposal: ProposalSpec::default(),
            pool_size: 10_000,
            scale: 1.0,
            table: OnceLock::new(),
            wave: OnceLock::new(),
            pool: OnceLock::new(),
        }
    }

    pub fn from_config(cfg: &crate::io::RunConfig) -> Self {
        let mut ctx = Context::new(cfg.seed);
        ctx.table_spec = cfg.fkpp_spec();
        ctx.wave_spec.params = cfg.params;
        ctx.proposal = cfg.proposal.clone();
        ctx.pool_size = cfg.pool_size;
        ctx.scale = cfg.scale;
        ctx
    }

    pub fn table(&self) -> Result<&FkppTable> {
        if self.table.get().is_none() {
            let t = solve(&self.table_spec)?;
            let _ = self.table.set(t);
        }
        Ok(self.table.get().unwrap())
    }

    pub fn wave(&self) -> Result<&(FkppTable, WaveEstimate)> {
        if self.wave.get().is_none() {
            let t = solve(&self.wave_spec)?;
            let w = crate::fkpp::wave_estimate(&t, &[10.0, 20.0, 40.0, 80.0], &[0.1, 0.5, 0.9])?;
            let _ = self.wave.set((t, w));
        }
        Ok(self.wave.get().unwrap())
    }

    /// `(C, C_B)` in the calibrated convention.
    pub fn constants(&self) -> Result<(f64, f64)> {
        let (_, w) = self.wave()?;
        Ok((w.c(), w.c_b()))
    }

    pub fn pool(&self) -> Result<&BackbonePool> {
        if self.pool.get().is_none() {
            let p = sample_y(self.table()?, &self.proposal, self.pool_size, self.seed ^ 0x5eed)?;
            let _ = self.pool.set(p);
        }
        Ok(self.pool.get().unwrap())
    }
}

/// Run `f(i)` for `i < n` in parallel; results come back in index order.
pub(crate) fn replicate<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

/// `(a - b) / sqrt(se_a^2 + se_b^2)`, with identical values scoring 0 even when both are exact.
pub(crate) fn zscore(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        crate::stats::z_difference(a, se_a, b, se_b)
    }
}


#[cfg(test)]
mod tests;
