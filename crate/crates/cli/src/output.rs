//! Trace, summary and optimum files.

use std::io::{self, Write};

use e2e_qos::{IterationTrace, OracleSolution};
use serde::{Deserialize, Serialize};

use crate::config::FlatConfig;

pub fn trace_header(trace: &IterationTrace) -> Vec<String> {
    let k = trace.constraint_labels.len();
    let n = trace.records.first().map_or(0, |r| r.estimates.len());
    let mut cols: Vec<String> = ["t", "gamma", "phi_true", "phi_fictitious"].map(String::from).to_vec();
    cols.extend((1..=k).map(|c| format!("g_{c}")));
    for i in 1..=n {
        cols.extend((1..=k).map(|c| format!("e_{i}_{c}")));
    }
    cols.extend(trace.kpi_names.iter().cloned());
    cols
}

/// One row per iteration; reals in `{:.16e}` so the text round-trips.
pub fn write_trace_csv<W: Write>(trace: &IterationTrace, out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{}", trace_header(trace).join(","))?;
    let mut line = String::new();
    for r in &trace.records {
        line.clear();
        line.push_str(&r.t.to_string());
        let reals = [r.gamma, r.phi_true, r.phi_fictitious]
            .into_iter()
            .chain(r.g_true.iter().copied())
            .chain(r.estimates.iter().flatten().copied())
            .chain(r.kpis.iter().copied());
        for v in reals {
            line.push_str(&format!(",{v:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub config: serde_json::Value,
    pub iterations: u64,
    pub final_phi: f64,
    pub mean_phi_last_50: f64,
    pub final_constraints: Vec<f64>,
    pub final_kpis: Vec<f64>,
    /// `(mean_phi_last_50 - phi_star) / |phi_star|` when an optimum was supplied.
    pub oracle_gap: Option<f64>,
    pub oracle_phi: Option<f64>,
    pub wall_clock_seconds: f64,
}

impl RunSummary {
    pub fn new(trace: &IterationTrace, seed: u64, echo: &FlatConfig, phi_star: Option<f64>, wall: f64) -> Self {
        let n = trace.records.len();
        let mean = trace.mean_phi(n.saturating_sub(50), n - 1).expect("trace is never empty");
        let last = trace.last();
        RunSummary {
            seed,
            config: serde_json::to_value(echo).unwrap_or(serde_json::Value::Null),
            iterations: last.t,
            final_phi: last.phi_true,
            mean_phi_last_50: mean,
            final_constraints: last.g_true.clone(),
            final_kpis: last.kpis.clone(),
            oracle_gap: phi_star.map(|p| relative_gap(mean, p)),
            oracle_phi: phi_star,
            wall_clock_seconds: wall,
        }
    }
}

pub fn relative_gap(phi: f64, phi_star: f64) -> f64 {
    (phi - phi_star) / phi_star.abs().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimumFile {
    pub mu: f64,
    pub y_star: Vec<Vec<f64>>,
    pub phi_star: f64,
    pub converged: bool,
    pub certificate_residual: f64,
    pub constraints: Vec<f64>,
    pub kpi_names: Vec<String>,
    pub kpis: Vec<f64>,
    pub restart_phi: Vec<f64>,
}

impl OptimumFile {
    pub fn new(sol: &OracleSolution, mu: f64, constraints: Vec<f64>, kpi_names: Vec<String>, kpis: Vec<f64>) -> Self {
        OptimumFile {
            mu,
            y_star: sol.y_star.clone(),
            phi_star: sol.phi_star,
            converged: sol.converged,
            certificate_residual: sol.residual,
            constraints,
            kpi_names,
            kpis,
            restart_phi: sol.restarts.iter().map(|r| r.phi).collect(),
        }
    }
}
