//! `extcal` command-line tool.
//!
//! Exit codes: 0 success, 2 usage error, 3 unreadable or invalid input,
//! 4 geometry failure, 5 solver failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use extcal::ErrorClass;

#[derive(Debug, Parser)]
#[command(name = "extcal", version, about = "Targetless LiDAR-camera extrinsic calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Options {
    /// JSON run configuration (a scene spec for `synth`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the RANSAC seed (the scene seed for `synth`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Refine with uniform weights instead of contribution weights.
    #[arg(long, global = true)]
    pub no_weights: bool,
    /// Transform document for `analyze`, `evaluate` and `render`.
    #[arg(long, global = true)]
    pub transform: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Full pipeline: initial guess, weighted refinement, heatmap, overlay.
    Calibrate,
    /// Initial guess only (RANSAC-PnP and joint refinement).
    Init,
    /// Contribution heatmap and Hessian diagnostics at a given transform.
    Analyze,
    /// Normalized reprojection error of a transform on checkerboard corners.
    Evaluate,
    /// Write a synthetic scene with known ground truth.
    Synth,
    /// Render a LiDAR intensity image and its pixel-to-point map.
    Render,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = &cli.opts;
    let result = match cli.command {
        Command::Calibrate => commands::calibrate(opts),
        Command::Init => commands::init(opts),
        Command::Analyze => commands::analyze(opts),
        Command::Evaluate => commands::evaluate(opts),
        Command::Synth => commands::synth(opts),
        Command::Render => commands::render(opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            eprintln!("hint: {}", e.hint());
            ExitCode::from(match e.class() {
                ErrorClass::Input => 3,
                ErrorClass::Geometry => 4,
                ErrorClass::Convergence => 5,
            })
        }
    }
}
