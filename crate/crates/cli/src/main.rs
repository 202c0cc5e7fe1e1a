use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prkit_cli::config::{ExperimentConfig, Mode, Overrides};
use prkit_cli::experiment::{run_experiment, write_instances, RowStatus};
use prkit_cli::instances::generate_instances;
use prkit_cli::report::{read_report, render, summarize};

/// Seeded Fourier phase retrieval benchmarks.
#[derive(Debug, Parser)]
#[command(name = "prkit", version)]
struct Cli {
    /// Experiment config (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated solver names (er, gs, hio, hio-restart, phasecut-torus, deep-relaxation).
    #[arg(long, global = true, value_delimiter = ',')]
    solvers: Option<Vec<String>>,

    /// Oversampling ratio per axis.
    #[arg(long, global = true)]
    ratio: Option<f64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the configured instances and their measurements.
    Gen,
    /// Run every solver on every instance and write the report.
    Run,
    /// Summarize a report CSV (default: <out>/report.csv).
    Report { csv: Option<PathBuf> },
}

fn load(cli: &Cli) -> prkit_cli::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    Overrides {
        seed: cli.seed,
        solvers: cli.solvers.clone(),
        ratio: cli.ratio,
        output_dir: cli.out.clone(),
        mode: cli.mode,
    }
    .apply(&mut config)?;
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> prkit_cli::Result<()> {
    let config = load(cli)?;
    match &cli.command {
        Command::Gen => {
            let instances = generate_instances(&config)?;
            write_instances(&config, &instances)?;
            println!(
                "wrote {} instances to {}",
                instances.len(),
                config.output_dir.display()
            );
        }
        Command::Run => {
            let outcome = run_experiment(&config)?;
            for r in &outcome.reports {
                if r.status != RowStatus::Ok {
                    eprintln!(
                        "{} {}: {} ({})",
                        r.instance_id,
                        r.solver,
                        r.status.as_str(),
                        r.detail.as_deref().unwrap_or("")
                    );
                }
            }
            println!(
                "wrote {} rows to {}",
                outcome.reports.len(),
                outcome.csv_path.display()
            );
        }
        Command::Report { csv } => {
            let path = csv
                .clone()
                .unwrap_or_else(|| config.output_dir.join("report.csv"));
            let file = std::fs::File::open(&path)
                .map_err(|source| prkit_cli::Error::Io { path, source })?;
            print!("{}", render(&summarize(&read_report(file)?)));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prkit: {e}");
            ExitCode::FAILURE
        }
    }
}
