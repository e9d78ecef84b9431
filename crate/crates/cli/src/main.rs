//! `rdsurv`: regression-discontinuity estimation for censored survival data.

mod commands;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rdsurv::inference::Mode;
use rdsurv::KernelSpec;

use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "rdsurv", version, about = "Local-polynomial Aalen estimation of treatment effects at a cutoff")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Random seed; overrides the seed in a spec or plan file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for `montecarlo` (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log verbosity on standard error: off, error, warn, info, debug, trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    /// Output file (default: standard output).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Kernel moment matrices and bias constant as JSON.
    KernelConstants(KernelConstantsArgs),
    /// Draw a dataset from a design file.
    Simulate(SimulateArgs),
    /// Point estimates of the cumulative effect on a time grid.
    Estimate(EstimateArgs),
    /// Estimates with variances, bias correction and confidence intervals.
    Infer(InferArgs),
    /// Run a replicated simulation experiment.
    Montecarlo(MonteCarloArgs),
}

#[derive(Args, Debug)]
pub struct KernelConstantsArgs {
    #[arg(long, default_value = "triangular")]
    pub kernel: KernelSpec,
    /// Polynomial order.
    #[arg(long = "p")]
    pub p: usize,
    /// Moment index for vartheta and pilot order for psi_cross (default p + 1).
    #[arg(long = "q")]
    pub q: Option<usize>,
    /// Bandwidth ratio h / b for psi_cross.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Derivative order for the bias constant.
    #[arg(long, default_value_t = 0)]
    pub nu: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Design file of `key = value` lines.
    #[arg(long)]
    pub spec: PathBuf,
    /// Sample size.
    #[arg(long = "n")]
    pub n: usize,
    /// Replicate index; each index gives an independent dataset.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
}

#[derive(Args, Debug)]
pub struct DataArgs {
    /// CSV with columns time,event,forcing.
    #[arg(long)]
    pub input: PathBuf,
    /// Cutoff z0 (default: `# cutoff` line of the input).
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Horizon tau (default: `# horizon` line of the input).
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Polynomial order.
    #[arg(long = "p", default_value_t = 1)]
    pub p: usize,
    /// Derivative order.
    #[arg(long, default_value_t = 0)]
    pub nu: usize,
    /// Bandwidth.
    #[arg(long = "h")]
    pub h: f64,
    #[arg(long, default_value = "triangular")]
    pub kernel: KernelSpec,
    /// Comma-separated evaluation times (default: the horizon).
    #[arg(long, value_delimiter = ',')]
    pub grid: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Pilot order (default p + 1).
    #[arg(long = "q")]
    pub q: Option<usize>,
    /// Pilot bandwidth (default 2h).
    #[arg(long = "b")]
    pub b: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// raw (undersmoothed), bc (conventional bias correction) or robust.
    #[arg(long, default_value = "robust")]
    pub mode: Mode,
}

#[derive(Args, Debug)]
pub struct MonteCarloArgs {
    /// Plan file of `key = value` lines.
    #[arg(long)]
    pub plan: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    let output = match &cli.command {
        Command::KernelConstants(a) => commands::kernel_constants(a)?,
        Command::Simulate(a) => commands::simulate(a, g)?,
        Command::Estimate(a) => commands::estimate(a)?,
        Command::Infer(a) => commands::infer(a)?,
        Command::Montecarlo(a) => commands::montecarlo(a, g)?,
    };
    match &g.out {
        Some(path) => std::fs::write(path, output)?,
        None => std::io::stdout().lock().write_all(output.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            eprintln!("error[usage]: {}", rendered.trim_start_matches("error: ").trim_end());
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.global.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
