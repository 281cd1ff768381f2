//! `sensocom`: batch runs of the sensory commutativity experiments.

mod commands;
mod output;
mod svg;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

use commands::{BaselinesArgs, DetectArgs, ExploreArgs, ObjmapArgs, ScpArgs, SweepArgs, ValidateArgs};

#[derive(Parser)]
#[command(name = "sensocom", version, about = "Sensory commutativity experiments on a planar embodied agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// SCP table for every DOF of one agent in one environment.
    Scp(ScpArgs),
    /// SCP tables over agents × environments.
    Sweep(SweepArgs),
    /// Local-SCP map of immovable obstacles.
    Objmap(ObjmapArgs),
    /// Movable-object detection experiments.
    Detect(DetectArgs),
    /// Exploration benchmarks on full, truncated and adapted action spaces.
    Explore(ExploreArgs),
    /// Naive sensor-change and prediction-error baselines.
    Baselines(BaselinesArgs),
    /// Property suite; exits with 1 if a check fails.
    Validate(ValidateArgs),
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("SENSOCOM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("SENSOCOM_THREADS must be a non-negative integer, got `{v}`"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> anyhow::Result<bool> {
        init_threads()?;
        match cli.command {
            Command::Scp(a) => commands::scp(&a),
            Command::Sweep(a) => commands::sweep(&a),
            Command::Objmap(a) => commands::objmap(&a),
            Command::Detect(a) => commands::detect(&a),
            Command::Explore(a) => commands::explore(&a),
            Command::Baselines(a) => commands::baselines(&a),
            Command::Validate(a) => commands::validate(&a),
        }
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
