//! Subcommand bodies. Each returns a value the binary turns into files,
//! console output and an exit code.

use std::fs;
use std::path::Path;
use std::time::Instant;

use e2e_qos::{run_seeds, run_with, Execution, IterationTrace};
use serde::Serialize;

use crate::config::Settings;
use crate::output::{relative_gap, write_trace_csv, OptimumFile, RunSummary};
use crate::setup::Prepared;
use crate::suite::{self, Check, NashCheck, SuiteInputs};

pub fn execution() -> Execution {
    if cfg!(feature = "parallel") {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

pub fn run_trace(settings: &Settings) -> anyhow::Result<(Prepared, IterationTrace, f64)> {
    let prep = Prepared::new(settings)?;
    let start = Instant::now();
    let y0 = prep.initial(prep.run.seed);
    let trace = run_with(&prep.problem, &prep.w, &prep.run, &y0, execution())?;
    Ok((prep, trace, start.elapsed().as_secs_f64()))
}

pub fn cmd_run(settings: &Settings, out: &Path, optimum: Option<&Path>) -> anyhow::Result<RunSummary> {
    let phi_star = optimum
        .map(|p| -> anyhow::Result<f64> {
            let text = fs::read_to_string(p)?;
            Ok(serde_json::from_str::<OptimumFile>(&text)?.phi_star)
        })
        .transpose()?;
    let (prep, trace, wall) = run_trace(settings)?;
    fs::create_dir_all(out)?;
    write_trace_csv(&trace, fs::File::create(out.join("trace.csv"))?)?;
    let summary = RunSummary::new(&trace, prep.run.seed, &settings.echo, phi_star, wall);
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

pub fn solve_oracle(prep: &Prepared, mu: f64, settings: &Settings) -> anyhow::Result<OptimumFile> {
    let sol = suite::oracle(&prep.problem, mu, &settings.oracle, execution())?;
    let g = prep.problem.evaluate_global_constraints(&sol.y_star)?;
    let names = prep.problem.kpis().map(|k| k.names.clone()).unwrap_or_default();
    let kpis = prep.problem.evaluate_kpis(&sol.y_star);
    Ok(OptimumFile::new(&sol, mu, g, names, kpis))
}

pub fn cmd_oracle(settings: &Settings, out: &Path) -> anyhow::Result<OptimumFile> {
    let prep = Prepared::new(settings)?;
    let opt = solve_oracle(&prep, prep.run.mu, settings)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("optimum.json"), serde_json::to_string_pretty(&opt)?)?;
    Ok(opt)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub nash: NashCheck,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn cmd_verify(settings: &Settings) -> anyhow::Result<VerifyReport> {
    let (prep, trace, _) = run_trace(settings)?;
    let mut checks = vec![Check::flag("weight matrix doubly stochastic and connected", true, "validated on load")];
    checks.extend(suite::identity_checks(&SuiteInputs {
        problem: &prep.problem,
        trace: &trace,
        tau: prep.run.fictitious_factor,
        points: settings.verify_points,
        seed: prep.run.seed,
    })?);
    let opt = solve_oracle(&prep, settings.game_mu, settings)?;
    checks.push(Check::flag(
        "oracle converged",
        opt.converged,
        format!("residual {:.3e}", opt.certificate_residual),
    ));
    let nash = suite::nash_probe(&prep.problem, &prep.w, settings.game_mu, &opt.y_star, &settings.nash, execution())?;
    checks.extend(suite::nash_checks(&nash));
    Ok(VerifyReport { checks, nash })
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowGap {
    pub from: usize,
    pub to: usize,
    pub mean_phi: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub windows: Vec<WindowGap>,
    pub final_constraints: Vec<f64>,
    pub final_kpis: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub phi_star: f64,
    pub oracle_converged: bool,
    pub seeds: Vec<SeedComparison>,
}

/// Oracle once, then every configured seed; gaps are
/// `(mean phi over the window - phi*) / |phi*|`.
pub fn compare_traces(settings: &Settings) -> anyhow::Result<(Prepared, OptimumFile, Vec<(u64, IterationTrace)>)> {
    let prep = Prepared::new(settings)?;
    let opt = solve_oracle(&prep, prep.run.mu, settings)?;
    let traces = run_seeds(
        &prep.problem,
        &prep.w,
        &prep.run,
        &settings.compare_seeds,
        |s| prep.initial(s),
        execution(),
    );
    let traces = settings
        .compare_seeds
        .iter()
        .copied()
        .zip(traces)
        .map(|(s, t)| t.map(|t| (s, t)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((prep, opt, traces))
}

pub fn cmd_compare(settings: &Settings) -> anyhow::Result<CompareReport> {
    let (_, opt, traces) = compare_traces(settings)?;
    let w = settings.compare_window;
    let seeds = traces
        .iter()
        .map(|(seed, t)| {
            let n = t.records.len();
            let windows = (0..n)
                .step_by(w)
                .map(|from| {
                    let to = (from + w - 1).min(n - 1);
                    let mean_phi = t.mean_phi(from, to).expect("window inside the trace");
                    WindowGap {
                        from,
                        to,
                        mean_phi,
                        gap: relative_gap(mean_phi, opt.phi_star),
                    }
                })
                .collect();
            SeedComparison {
                seed: *seed,
                windows,
                final_constraints: t.last().g_true.clone(),
                final_kpis: t.last().kpis.clone(),
            }
        })
        .collect();
    Ok(CompareReport {
        phi_star: opt.phi_star,
        oracle_converged: opt.converged,
        seeds,
    })
}
