use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use e2e_qos_cli::commands::{self, CompareReport, VerifyReport};
use e2e_qos_cli::config::{self, Settings};

/// Distributed delay-budget optimization: runs, reference solves and checks.
#[derive(Parser)]
#[command(name = "e2e-qos", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the distributed algorithm; writes trace.csv and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        /// optimum.json from `oracle`, used to report the optimality gap.
        #[arg(long)]
        optimum: Option<PathBuf>,
    },
    /// Solve the penalized problem centrally; writes optimum.json.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Run the invariant suites and print a pass/fail table.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Distributed runs for `compare.seeds` against the oracle, gap per window.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// List the bundled configs.
    Configs,
}

#[derive(Args)]
struct Common {
    /// Config file, or `builtin:<name>` for a bundled one.
    config: String,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override any config key, e.g. `--set noise.sigma=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Settings, config::ConfigError> {
        let mut overrides = self.overrides.clone();
        if let Some(n) = self.iterations {
            overrides.push(format!("run.iterations={n}"));
        }
        if let Some(s) = self.seed {
            overrides.push(format!("run.seed={s}"));
        }
        Settings::resolve(&self.config, &overrides)
    }
}

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn print_verify(report: &VerifyReport) {
    println!("{:<48} {:>6} {:>12} {:>12}  detail", "check", "result", "measured", "tolerance");
    for c in &report.checks {
        println!(
            "{:<48} {:>6} {:>12.3e} {:>12.3e}  {}",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.measured,
            c.tolerance,
            c.detail
        );
    }
}

fn print_compare(report: &CompareReport) {
    println!("phi* = {:.10e} (converged: {})", report.phi_star, report.oracle_converged);
    for s in &report.seeds {
        println!("seed {}", s.seed);
        for w in &s.windows {
            println!("  t {:>5}..{:<5} mean phi {:>14.6e}  gap {:>+10.4}%", w.from, w.to, w.mean_phi, 100.0 * w.gap);
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Configs => {
            for n in config::builtin_names() {
                println!("{}{n}", config::BUILTIN_PREFIX);
            }
            Ok(0)
        }
        Command::Run { common, optimum } => {
            let settings = common.settings()?;
            let s = commands::cmd_run(&settings, &common.out, optimum.as_deref())?;
            println!(
                "seed {}: {} iterations, final phi {:.10e}, mean of last 50 {:.10e}{}",
                s.seed,
                s.iterations,
                s.final_phi,
                s.mean_phi_last_50,
                s.oracle_gap.map(|g| format!(", gap {:+.4}%", 100.0 * g)).unwrap_or_default()
            );
            Ok(0)
        }
        Command::Oracle { common } => {
            let settings = common.settings()?;
            let o = commands::cmd_oracle(&settings, &common.out)?;
            println!(
                "phi* = {:.12e}, converged {}, residual {:.3e}",
                o.phi_star, o.converged, o.certificate_residual
            );
            Ok(0)
        }
        Command::Verify { common } => {
            let settings = common.settings()?;
            let report = commands::cmd_verify(&settings)?;
            print_verify(&report);
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("verify.json"), serde_json::to_string_pretty(&report)?)?;
            Ok(if report.passed() { 0 } else { EXIT_FAILED })
        }
        Command::Compare { common } => {
            let settings = common.settings()?;
            let report = commands::cmd_compare(&settings)?;
            print_compare(&report);
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("compare.json"), serde_json::to_string_pretty(&report)?)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
