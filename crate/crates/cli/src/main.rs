mod config;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use gkdv_core::nonlinearity::{c_star_closed_form, CStar, Nonlinearity};
use gkdv_core::spectral::spectral_report;

/// Numerical laboratory for solitary waves of generalized KdV equations.
#[derive(Parser)]
#[command(name = "gkdvlab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a configured scenario and write its artifacts.
    Run {
        /// JSON experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for diagnostics.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the existence threshold c* for f = u^p - a u^q.
    ScanCstar {
        #[arg(long)]
        p: u32,
        #[arg(long)]
        q: u32,
        #[arg(long)]
        a: f64,
    },
    /// Print the spectral report of the linearized operator at speed c.
    Spectral {
        #[arg(long)]
        c: f64,
        /// Config supplying the nonlinearity and the analysis grid.
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Run { config, out } => cmd_run(&config, &out),
        Cmd::ScanCstar { p, q, a } => cmd_scan_cstar(p, q, a),
        Cmd::Spectral { c, config } => cmd_spectral(c, &config),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Returns Ok(true) when every assertion passed, Ok(false) on a clean run
/// with failed assertions, Err on configuration or runtime errors.
fn cmd_run(config: &PathBuf, out: &PathBuf) -> Result<bool> {
    let cfg = ExperimentConfig::from_path(config)?;
    let outcome = scenario::run_scenario(&cfg)?;

    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let csv_path = out.join("diagnostics.csv");
    let file = std::fs::File::create(&csv_path)
        .with_context(|| format!("writing {}", csv_path.display()))?;
    outcome
        .series
        .write_csv(std::io::BufWriter::new(file))
        .with_context(|| format!("writing {}", csv_path.display()))?;

    let summary_path = out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&outcome.summary_json())?;
    text.push('\n');
    std::fs::write(&summary_path, text)
        .with_context(|| format!("writing {}", summary_path.display()))?;

    let stdout = std::io::stdout();
    scenario::emit_report(&mut stdout.lock(), &outcome)?;
    Ok(outcome.passed())
}

fn cmd_scan_cstar(p: u32, q: u32, a: f64) -> Result<bool> {
    if p < 2 || q <= p || !(a > 0.0) {
        bail!("scan-cstar needs 2 <= p < q and a > 0, got p={p} q={q} a={a}");
    }
    let nl = Nonlinearity::power_difference(p, q, 1.0, a)?;
    let scanned = nl.c_star()?;
    let (s0, exact) = c_star_closed_form(p, q, a);
    match scanned {
        CStar::Finite(c) => {
            let rel = (c - exact).abs() / exact.abs().max(f64::MIN_POSITIVE);
            println!("c_star = {c}");
            println!("closed_form = {exact} (s0 = {s0})");
            println!("relative_error = {rel:e}");
            if rel <= 1e-8 {
                println!("PASS c_star_matches_closed_form");
                Ok(true)
            } else {
                println!("FAIL c_star_matches_closed_form: {rel:e} > 1e-8");
                Ok(false)
            }
        }
        CStar::Infinite => {
            println!("c_star = infinite");
            println!("FAIL c_star_matches_closed_form: expected {exact}");
            Ok(false)
        }
    }
}

fn cmd_spectral(c: f64, config: &PathBuf) -> Result<bool> {
    if !(c > 0.0) {
        bail!("spectral needs c > 0, got {c}");
    }
    let cfg = ExperimentConfig::from_path(config)?;
    let nl = cfg.nonlinearity()?;
    let report = spectral_report(&nl, c, cfg.analysis_grid.length, cfg.analysis_grid.n, None)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    let ok = report.lambda1 > 0.0
        && report.residuals.kernel <= 1e-5
        && report.residuals.virial_identity <= 1e-5;
    Ok(ok)
}
