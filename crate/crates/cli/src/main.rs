//! Experiment runner: train single runs, compare regularizers over a seeded
//! run matrix, export decision surfaces, and trace condition numbers.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adaptive_lrf::harness::{
    export_surface_grid, run_experiment, HarnessError, RunConfig, SurfaceBounds,
};
use adaptive_lrf::net::load_checkpoint;

#[derive(Parser)]
#[command(name = "alrf", version, about = "Adaptive low-rank-factorization training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for run artifacts.
    #[arg(long, default_value = "runs")]
    out_dir: PathBuf,
    /// Suppress progress output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the config's first regularizer on a single seed.
    Train(RunArgs),
    /// Run the full regularizer x seed matrix and write a summary table.
    Compare(RunArgs),
    /// Run the matrix and report per-epoch condition-number traces.
    Condtrace(RunArgs),
    /// Evaluate a trained checkpoint over a 2-D grid and write CSV scores.
    Surface {
        /// Network checkpoint (JSON).
        checkpoint: PathBuf,
        /// Grid rectangle as x_min,x_max,y_min,y_max.
        #[arg(long, default_value = "-3,3,-3,3", allow_hyphen_values = true)]
        bounds: String,
        /// Grid points per axis.
        #[arg(long, default_value_t = 200)]
        res: usize,
        /// Output CSV path.
        #[arg(long, default_value = "grid.csv")]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

// 1 for configuration problems, 2 for runtime failures.
struct Failure {
    code: u8,
    message: String,
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn runtime_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn classify(e: HarnessError) -> Failure {
    match e {
        HarnessError::Config { .. } | HarnessError::Parse { .. } | HarnessError::MissingLabel(_) => {
            config_failure(e.to_string())
        }
        other => runtime_failure(other.to_string()),
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::load(&args.config).map_err(classify)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    Ok(config)
}

fn print_outcomes(out: &adaptive_lrf::harness::ExperimentOutput, quiet: bool) {
    if quiet {
        return;
    }
    for outcome in &out.outcomes {
        match &outcome.result {
            Ok(success) => {
                let m = &success.final_record;
                println!(
                    "{} seed {}: train_loss {:.4} train_acc {:.3} | test_loss {:.4} test_acc {:.3}",
                    outcome.label,
                    outcome.seed,
                    m.train.loss,
                    m.train.accuracy,
                    m.test.loss,
                    m.test.accuracy
                );
            }
            Err(e) => eprintln!("{} seed {}: FAILED: {e}", outcome.label, outcome.seed),
        }
    }
}

fn finish(out: adaptive_lrf::harness::ExperimentOutput, quiet: bool) -> Result<(), Failure> {
    let failures: Vec<&adaptive_lrf::harness::RunOutcome> = out
        .outcomes
        .iter()
        .filter(|o| o.result.is_err())
        .collect();
    if !quiet {
        println!("summary written to {}", out.summary_path.display());
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(runtime_failure(format!("{} run(s) failed", failures.len())))
    }
}

fn cmd_train(args: RunArgs) -> Result<(), Failure> {
    let mut config = load_config(&args)?;
    config.regularizers.truncate(1);
    config.seeds.truncate(1);
    let out = run_experiment(&config, &args.out_dir).map_err(classify)?;
    print_outcomes(&out, args.quiet);
    finish(out, args.quiet)
}

fn cmd_compare(args: RunArgs) -> Result<(), Failure> {
    let config = load_config(&args)?;
    let out = run_experiment(&config, &args.out_dir).map_err(classify)?;
    print_outcomes(&out, args.quiet);
    if !args.quiet {
        for row in &out.summary {
            println!(
                "{:<24} runs {}  test_loss {:.4} +- {:.4}  test_acc {:.3} +- {:.3}  test_f {:.3}",
                row.label,
                row.runs,
                row.test_loss.0,
                row.test_loss.1,
                row.test_acc.0,
                row.test_acc.1,
                row.test_f.0
            );
        }
    }
    finish(out, args.quiet)
}

fn cmd_condtrace(args: RunArgs) -> Result<(), Failure> {
    let config = load_config(&args)?;
    let out = run_experiment(&config, &args.out_dir).map_err(classify)?;
    if !args.quiet {
        for outcome in &out.outcomes {
            if let Ok(success) = &outcome.result {
                let final_sncn = success
                    .history
                    .conditions
                    .last()
                    .map(|c| c.sncn)
                    .unwrap_or(f64::NAN);
                println!(
                    "{} seed {}: final sncn {:.4} (trace: {})",
                    outcome.label,
                    outcome.seed,
                    final_sncn,
                    success.artifacts.conditions_jsonl.display()
                );
            }
        }
    }
    finish(out, args.quiet)
}

fn cmd_surface(
    checkpoint: PathBuf,
    bounds: String,
    res: usize,
    out: PathBuf,
    quiet: bool,
) -> Result<(), Failure> {
    let bounds = SurfaceBounds::parse(&bounds).map_err(config_failure)?;
    if res < 2 {
        return Err(config_failure("--res must be at least 2"));
    }
    let net = load_checkpoint(&checkpoint).map_err(|e| runtime_failure(e.to_string()))?;
    export_surface_grid(&net, &bounds, res, &out).map_err(classify)?;
    if !quiet {
        println!("wrote {} rows to {}", res * res, out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Condtrace(args) => cmd_condtrace(args),
        Command::Surface {
            checkpoint,
            bounds,
            res,
            out,
            quiet,
        } => cmd_surface(checkpoint, bounds, res, out, quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
