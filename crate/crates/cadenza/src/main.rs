//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on fatal configuration or corpus errors,
//! 2 when the run completed but some pieces failed and were excluded.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cadenza::pipeline::{self, stage_closure, RunConfig, Stage};

#[derive(Debug, Parser)]
#[command(name = "cadenza", version, about = "Corpus analysis of symbolic music performances")]
struct Cli {
    /// Path to the run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker pool size for piece-level parallelism (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the corpus and write canonical pieces and symbol sequences.
    Ingest,
    /// Learn per-piece models and write surprise/entropy series.
    Dynamics,
    /// Embed dynamics feature matrices with t-SNE.
    Embed,
    /// Synthesize, demodulate, and analyze envelope rhythm structure.
    Acoustics,
    /// Write grouped spectra and rate densities.
    Report,
    /// Run every stage (optionally restricted with --stage).
    RunAll {
        /// Stages to run; dependencies are added automatically.
        #[arg(long = "stage")]
        stages: Vec<Stage>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let config_path = match &cli.config {
        Some(path) => path.clone(),
        None => {
            report_fatal("no --config given");
            return ExitCode::from(1);
        }
    };
    let mut config: RunConfig = match pipeline::validate_config(&config_path) {
        Ok(config) => config,
        Err(e) => {
            report_fatal(&e.to_string());
            return ExitCode::from(1);
        }
    };

    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    if let Some(jobs) = cli.jobs {
        config.jobs = jobs;
    }
    config.stages = match &cli.command {
        Command::Ingest => stage_closure(&[Stage::Ingest]),
        Command::Dynamics => stage_closure(&[Stage::Dynamics]),
        Command::Embed => stage_closure(&[Stage::Embed]),
        Command::Acoustics => stage_closure(&[Stage::Acoustics]),
        Command::Report => stage_closure(&[Stage::Report]),
        Command::RunAll { stages } => {
            if stages.is_empty() {
                config.stages.clone()
            } else {
                stage_closure(stages)
            }
        }
    };

    match pipeline::run(&config) {
        Ok(report) => {
            for warning in &report.warnings {
                eprintln!("warning: {warning}");
            }
            eprintln!(
                "done: {} pieces, {} outputs, {:.2}s (config {})",
                report.pieces_loaded,
                report.outputs.len(),
                report.wall_time_seconds,
                &report.config_hash[..12],
            );
            if report.is_partial() {
                eprintln!(
                    "{} piece(s) failed and were excluded; see run_manifest.json",
                    report.piece_failures.len()
                );
                ExitCode::from(2)
            } else {
                ExitCode::from(0)
            }
        }
        Err(e) => {
            report_fatal(&e.to_string());
            ExitCode::from(1)
        }
    }
}

/// Machine-readable error report on stage-fatal conditions.
fn report_fatal(message: &str) {
    let doc = serde_json::json!({ "status": "fatal", "error": message });
    eprintln!("{doc}");
}
