use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssc_cli::config::RunConfig;
use ssc_cli::verify::{run_suite, Suite};
use ssc_cli::{calibrate, fig1, sweep, CliError};

/// Connectivity experiments for sparse subspace clustering.
///
/// The worker count defaults to the number of cores and can be set with
/// the SSC_WORKERS environment variable.
#[derive(Parser)]
#[command(name = "ssc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the angle × noise × trial × method sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Affinity heatmaps for two planar arcs at the given gaps (degrees).
    Fig1 {
        /// Comma separated; an empty list writes nothing.
        #[arg(long, default_value = "2,4,10,20", allow_hyphen_values = true)]
        gaps: String,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a verification suite: oracle, props or invariants.
    Verify {
        #[arg(long)]
        suite: String,
    },
    /// Scan the configured delta grid and recommend a threshold.
    CalibrateDelta {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_gaps(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(|g| g.parse().map_err(|_| CliError::Usage(format!("bad gap '{g}'"))))
        .collect()
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SSC_WORKERS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("SSC_WORKERS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_workers()?;
    match cli.command {
        Command::Sweep { config, out } => {
            let cfg = RunConfig::from_path(&config)?;
            let result = sweep::run_sweep(&cfg)?;
            sweep::write_outputs(&result, &out)?;
            eprintln!(
                "{} records, {} failed cell(s), written to {}",
                result.records.len(),
                result.failures.len(),
                out.display()
            );
            for f in &result.failures {
                eprintln!("  angle {} sigma {} trial {} {}: {}", f.angle_deg, f.sigma, f.trial, f.method, f.error);
            }
        }
        Command::Fig1 { gaps, lambda, out } => {
            let gaps = parse_gaps(&gaps)?;
            let rows = fig1::run_fig1(&gaps, lambda)?;
            fig1::write_fig1(&rows, lambda, &out)?;
            for (s, _) in &rows {
                println!(
                    "gap {:>5}: mean cross {:.4}, mean nonzero within {:.4}, ratio {:.4}",
                    s.gap_deg, s.mean_cross, s.mean_within_nonzero, s.ratio
                );
            }
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let report = run_suite(suite);
            println!("{}", serde_json::to_string_pretty(&report)?);
            for c in &report.checks {
                eprintln!(
                    "{:<40} {:>5} case(s) {:>4} violation(s){}",
                    c.name,
                    c.cases,
                    c.violations,
                    if c.gated { "" } else { "  (informational)" }
                );
            }
            if report.violations > 0 {
                return Err(CliError::Violations(report.violations));
            }
        }
        Command::CalibrateDelta { config } => {
            let cfg = RunConfig::from_path(&config)?;
            print!("{}", calibrate::calibrate(&cfg)?.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
