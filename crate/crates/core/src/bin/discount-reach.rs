use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use discount_reach::cli;
use discount_reach::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "discount-reach", version, about = "Discounted reach-avoid and stabilize-avoid solvers")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Worker threads; falls back to DISCOUNT_REACH_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct Run {
    #[arg(long)]
    config: PathBuf,
    /// Overrides output_dir from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Discounted reach-avoid value and its finite-horizon slices.
    SolveRa(Run),
    /// Smallest invariant set, R-CLVF and its level shift.
    SolveRclvf(Run),
    /// R-CLVF followed by the stabilize-avoid reach-avoid solve.
    SolveSa(Run),
    /// Closed-loop rollouts from the solved artifacts.
    Simulate(Run),
    /// Binary field to headerless CSV (coordinates, value).
    Export {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Err(e) = cli::configure_threads(args.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    let (run, cmd): (Run, fn(&ExperimentConfig) -> i32) = match args.command {
        Command::Export { field, format, out } => {
            return ExitCode::from(cli::cmd_export(&field, &format, out.as_deref()) as u8);
        }
        Command::SolveRa(r) => (r, cli::cmd_solve_ra),
        Command::SolveRclvf(r) => (r, cli::cmd_solve_rclvf),
        Command::SolveSa(r) => (r, cli::cmd_solve_sa),
        Command::Simulate(r) => (r, cli::cmd_simulate),
    };
    let code = match cli::load_config(&run.config, run.out.as_deref()) {
        Ok(cfg) => cmd(&cfg),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
