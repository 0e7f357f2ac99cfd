use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use nsnewton::newton::Termination;
use nsnewton::{Method, RateReport, SolveTrace, SolverConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

pub fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

/// Plain-vector copy of a [`SolveTrace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub termination: Termination,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_iterate: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
    pub residual_norms: Vec<f64>,
    pub step_norms: Vec<f64>,
    pub element_ids: Vec<Option<usize>>,
    pub membership_residuals: Vec<f64>,
    pub errors: Option<Vec<f64>>,
}

impl From<&SolveTrace> for TraceSummary {
    fn from(t: &SolveTrace) -> Self {
        TraceSummary {
            termination: t.termination.clone(),
            iterations: t.iterations(),
            final_residual: t.final_residual(),
            final_iterate: t.final_iterate().as_slice().to_vec(),
            iterates: t.iterates.iter().map(|x| x.as_slice().to_vec()).collect(),
            residual_norms: t.residual_norms.clone(),
            step_norms: t.step_norms.clone(),
            element_ids: t.element_ids.clone(),
            membership_residuals: t.membership_residuals.clone(),
            errors: t.errors.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub problem: String,
    pub method: Method,
    pub x0: Vec<f64>,
    pub root: Option<Vec<f64>>,
    pub seed: u64,
    pub config: SolverConfig,
    pub trace: TraceSummary,
    /// Present when the run converged and a root is known.
    pub rate: Option<RateReport>,
    pub timestamps: Option<Timestamps>,
}

impl RunRecord {
    pub fn converged(&self) -> bool {
        self.trace.termination == Termination::Converged
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per iterate; step columns are empty on the last row.
pub fn csv_trace(record: &RunRecord) -> String {
    let t = &record.trace;
    let n = record.x0.len();
    let mut out = String::from("k");
    for i in 1..=n {
        write!(out, ",x{i}").unwrap();
    }
    out.push_str(",residual_norm,step_norm,element_id,membership_residual,error\n");
    for (k, x) in t.iterates.iter().enumerate() {
        write!(out, "{k}").unwrap();
        for v in x {
            write!(out, ",{}", num(*v)).unwrap();
        }
        let step = |v: Option<&f64>| v.map_or(String::new(), |v| num(*v));
        let element = t
            .element_ids
            .get(k)
            .copied()
            .flatten()
            .map_or(String::new(), |e| e.to_string());
        let error = t
            .errors
            .as_ref()
            .and_then(|e| e.get(k))
            .map_or(String::new(), |v| num(*v));
        writeln!(
            out,
            ",{},{},{},{},{}",
            num(t.residual_norms[k]),
            step(t.step_norms.get(k)),
            element,
            step(t.membership_residuals.get(k)),
            error
        )
        .unwrap();
    }
    out
}
