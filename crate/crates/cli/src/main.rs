// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use veracity_core::dump::validate_dump;
use veracity_core::probe::sparsity;
use veracity_core::report::{self, figures, ReportBundle, RunConfig};
use veracity_core::synth::{self, RegimeSpec};

/// Probe-versus-query analysis over representation dumps.
#[derive(Parser)]
#[command(name = "veracity", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dump directory; exit status 0 iff it is valid.
    Validate { dir: PathBuf },
    /// Train a probe on the train split and write probe.json.
    Train { config: PathBuf },
    /// Full evaluation: writes the report bundle and prints the accuracy table.
    Run { config: PathBuf },
    /// Regularization sweep over the configured l1 penalties.
    Sweep { config: PathBuf },
    /// Generate a synthetic dump from a JSON regime spec.
    Synth { spec: PathBuf, out_dir: PathBuf },
    /// Print a saved bundle's table and render its figures into <bundle>/figures.
    Report { bundle_dir: PathBuf },
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { dir } => {
            let report = validate_dump(&dir);
            if report.is_valid() {
                println!("{}: valid", dir.display());
                return Ok(ExitCode::SUCCESS);
            }
            for v in &report.violations {
                match &v.record_id {
                    Some(id) => eprintln!("{:?} [{id}]: {}", v.kind, v.detail),
                    None => eprintln!("{:?}: {}", v.kind, v.detail),
                }
            }
            eprintln!(
                "{}: {} violation(s)",
                dir.display(),
                report.violations.len()
            );
            Ok(ExitCode::FAILURE)
        }
        Command::Train { config } => {
            let config = load_config(&config)?;
            let model = report::train(&config)?;
            if !model.converged {
                warn_all(&["probe did not reach the gradient tolerance".to_string()]);
            }
            println!(
                "trained probe: loss {:.6}, sparsity {:.4}, written to {}",
                model.train_loss,
                sparsity(&model),
                config.out_dir.join(report::PROBE_FILE).display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config } => {
            let config = load_config(&config)?;
            let bundle = report::run_full(&config)?;
            warn_all(&bundle.meta.warnings);
            print!("{}", bundle.table());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config } => {
            let config = load_config(&config)?;
            let sweep = report::run_sweep(&config)?;
            for row in sweep.rows.iter().filter(|r| !r.converged) {
                warn_all(&[format!(
                    "probe with l1 = {} did not converge",
                    row.l1_strength
                )]);
            }
            print!("{}", sweep.table());
            Ok(ExitCode::SUCCESS)
        }
        Command::Synth { spec, out_dir } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let spec: RegimeSpec = serde_json::from_str(&text)
                .with_context(|| format!("parsing regime spec {}", spec.display()))?;
            let dump = synth::generate(&spec)?;
            dump.write(&out_dir)?;
            println!(
                "wrote {} examples ({}) to {}",
                dump.records().len(),
                spec.regime,
                out_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { bundle_dir } => {
            let bundle = ReportBundle::load(&bundle_dir)
                .with_context(|| format!("loading bundle {}", bundle_dir.display()))?;
            warn_all(&bundle.meta.warnings);
            let out = bundle_dir.join("figures");
            figures::emit_figures(&bundle, &out)?;
            print!("{}", bundle.table());
            println!("figures written to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
