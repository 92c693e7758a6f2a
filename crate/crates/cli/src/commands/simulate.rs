use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use xmold_core::doe::write_csv;
use xmold_core::seed::PipelineSeeds;
use xmold_core::{Response, Surrogate, SurrogateParams};

use crate::artifact::{Ctx, RunConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Design CSV from `doe generate`.
    #[arg(long)]
    pub design: PathBuf,
    /// Surrogate parameter file; defaults to the bundled calibrated surface.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Override the weight noise standard deviation (g).
    #[arg(long)]
    pub weight_noise_sd: Option<f64>,
    /// Override the planarity noise standard deviation (mm).
    #[arg(long)]
    pub planarity_noise_sd: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Echo<'a> {
    #[serde(flatten)]
    args: &'a SimulateArgs,
    resolved_params: &'a SurrogateParams,
}

pub fn load_params(ctx: &Ctx, path: Option<&std::path::Path>) -> CliResult<SurrogateParams> {
    match path {
        None => Ok(SurrogateParams::default_params()),
        Some(p) => SurrogateParams::from_json(&ctx.read_string(p)?).map_err(|e| CliError::in_file(p, e)),
    }
}

pub fn exec(args: &SimulateArgs, ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let factors = ctx.factors(args.factors.as_deref())?;
    let mut params = load_params(ctx, args.params.as_deref())?;
    for (response, sd) in [
        (Response::Weight, args.weight_noise_sd),
        (Response::Planarity, args.planarity_noise_sd),
    ] {
        if let Some(sd) = sd {
            params.surface_mut(response).noise_sd = sd;
        }
    }
    let design = ctx.dataset(&args.design, &factors)?.design;
    let surrogate = Surrogate::new(&factors, params)?;
    let data = surrogate.simulate(&design, PipelineSeeds::new(args.seed).simulate)?;
    let run = RunConfig::new(
        "simulate",
        &Echo {
            args,
            resolved_params: surrogate.params(),
        },
    )?;
    ctx.write_csv(&args.out, &run, |w| Ok(write_csv(&data, w)?))?;
    Ok(vec![args.out.clone()])
}
