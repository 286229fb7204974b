use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use homotopy_node::experiment::{
    evaluate, run_experiment, run_sweep, ExperimentConfig, ModelCheckpoint,
};
use homotopy_node::systems::load_csv_dataset;
use homotopy_node::Error;

/// Train neural ODEs with synchronization-coupled homotopy optimization.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment from a JSON config.
    Run { config: PathBuf },
    /// Evaluate a checkpoint on a dataset CSV whose last `horizon` rows are held out.
    Evaluate {
        checkpoint: PathBuf,
        dataset: PathBuf,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
    },
    /// Compute a loss landscape from a `landscape_sweep` config.
    Sweep {
        config: PathBuf,
        /// Override the number of grid points.
        #[arg(long)]
        points: Option<usize>,
        /// Override the coupling strengths, comma separated.
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(command: Command) -> homotopy_node::Result<ExitCode> {
    match command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let report = run_experiment(&config)?;
            for window in &report.windows {
                println!("{}", serde_json::to_string_pretty(&window.summary)?);
            }
            println!("artifacts in {}", report.output_dir.display());
            if report.failures() > 0 {
                eprintln!("{} run(s) aborted; see error.txt in their directories", report.failures());
                return Ok(ExitCode::from(1));
            }
        }
        Command::Evaluate {
            checkpoint,
            dataset,
            horizon,
        } => {
            let ckpt = ModelCheckpoint::load(&checkpoint)?;
            let data = load_csv_dataset(&dataset)?;
            let metrics = evaluate(&ckpt, &data, horizon)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::Sweep { config, points, k } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(sweep) = config.sweep.as_mut() {
                if let Some(points) = points {
                    sweep.points = points;
                }
                if let Some(k) = k {
                    sweep.k_values = k;
                }
            }
            let (path, rows) = run_sweep(&config)?;
            println!("{} rows written to {}", rows.len(), path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
