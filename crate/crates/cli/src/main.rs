use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use optrack_cli::config::Method;
use optrack_cli::output::{emit_feedback, emit_outputs, emit_sweep};
use optrack_cli::{epsilon_sweep, parse_config, run_experiment, sampled_feedback, CliError, ExperimentConfig};
use optrack_core::DesiredTrajectory;

#[derive(Parser)]
#[command(name = "optrack", version, about = "Optimal trajectory tracking for control-affine systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve with the configured (or overridden) method and write outputs.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate the config and print the linearizing report.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Composite against the direct solver.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Composite solutions over a list of epsilons.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        epsilon: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampled-data feedback simulation.
    Feedback {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sample_dt: f64,
        /// Constant additive disturbance, one value per state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        disturbance: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(cfg: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output.clone())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { config, method, out } => {
            let mut cfg = parse_config(&config)?;
            if let Some(m) = method {
                cfg.method = m;
                cfg.validate()?;
            }
            let result = run_experiment(&cfg)?;
            for path in emit_outputs(&result, &out_dir(&cfg, out))? {
                println!("{}", path.display());
            }
        }
        Command::Check { config } => {
            let cfg = parse_config(&config)?;
            let (problem, model) = cfg.build_problem()?;
            let report = cfg.certify(&problem, &model)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
            report.require()?;
        }
        Command::Compare { config, out } => {
            let mut cfg = parse_config(&config)?;
            cfg.method = Method::Compare;
            cfg.validate()?;
            let result = run_experiment(&cfg)?;
            for (k, v) in &result.metrics {
                println!("{k} = {v:.6e}");
            }
            emit_outputs(&result, &out_dir(&cfg, out))?;
        }
        Command::Sweep { config, epsilon, out } => {
            let cfg = parse_config(&config)?;
            let rows = epsilon_sweep(&cfg, &epsilon)?;
            for path in emit_sweep(&rows, &out_dir(&cfg, out))? {
                println!("{}", path.display());
            }
        }
        Command::Feedback { config, sample_dt, disturbance, out } => {
            let cfg = parse_config(&config)?;
            let d = disturbance.map(|v| DesiredTrajectory::constant(&v));
            let result = sampled_feedback(&cfg, sample_dt, d.as_ref())?;
            for path in emit_feedback(&result.trajectory, &result.sample_times, &out_dir(&cfg, out))? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
