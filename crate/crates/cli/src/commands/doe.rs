use std::path::PathBuf;

use clap::{Args, Subcommand};
use serde::Serialize;
use xmold_core::doe::{build_ccd, replicate, write_csv, CcdMode};
use xmold_core::seed::PipelineSeeds;
use xmold_core::{Dataset, FactorSpec};

use crate::artifact::{Ctx, RunConfig};
use crate::error::CliResult;

#[derive(Debug, Clone, Subcommand)]
pub enum DoeCommand {
    /// Build the central composite design and replicate it into cycles.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Factor definition file; defaults to the bundled six-factor table.
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = CcdMode::Table3)]
    pub mode: CcdMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Echo<'a> {
    #[serde(flatten)]
    args: &'a GenerateArgs,
    resolved_factors: &'a [FactorSpec],
}

pub fn generate(args: &GenerateArgs, ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let factors = ctx.factors(args.factors.as_deref())?;
    let design = replicate(
        &build_ccd(&factors, args.mode)?,
        args.reps,
        PipelineSeeds::new(args.seed).design,
    )?;
    let run = RunConfig::new(
        "doe generate",
        &Echo {
            args,
            resolved_factors: &factors,
        },
    )?;
    ctx.write_csv(&args.out, &run, |w| Ok(write_csv(&Dataset::from(design), w)?))?;
    Ok(vec![args.out.clone()])
}
