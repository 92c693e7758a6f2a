use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use xmold_core::calibration::{calibrate, CalibrationConfig};

use crate::artifact::{Ctx, RunConfig};
use crate::commands::simulate::load_params;
use crate::error::CliResult;

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    /// Starting parameters; defaults to the bundled surface.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Simulated datasets per candidate.
    #[arg(long, default_value_t = CalibrationConfig::default().datasets)]
    pub datasets: usize,
    #[arg(long, default_value_t = CalibrationConfig::default().sweeps)]
    pub sweeps: usize,
    /// Grid points per target.
    #[arg(long, default_value_t = CalibrationConfig::default().grid)]
    pub grid: usize,
    /// Relative half-width of the searched band around each target.
    #[arg(long, default_value_t = CalibrationConfig::default().band)]
    pub band: f64,
    /// Calibrated parameter file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

pub fn exec(args: &CalibrateArgs, ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let factors = ctx.factors(args.factors.as_deref())?;
    let start = load_params(ctx, args.params.as_deref())?;
    let config = CalibrationConfig {
        datasets: args.datasets,
        sweeps: args.sweeps,
        grid: args.grid,
        band: args.band,
        seed: args.seed,
        ..Default::default()
    };
    let (params, report) = calibrate(&factors, &start, &config)?;
    let run = RunConfig::new("calibrate", args)?;
    ctx.write_artifact(&args.out, &params, &run)?;
    let mut written = vec![args.out.clone()];
    if let Some(path) = &args.report {
        ctx.write_artifact(path, &report, &run)?;
        written.push(path.clone());
    }
    Ok(written)
}
