use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use xmold_core::cause::{parse_methods, run_controlled_experiments, DirectionSet, ExplainerConfig};
use xmold_core::seed::PipelineSeeds;
use xmold_core::{CauseReport, Dataset, ExperimentConfig, FactorSpec, ModelFile};

use crate::artifact::{Ctx, RunConfig};
use crate::commands::explain::load_model;
use crate::commands::train::{echoed_args, parse_fractions};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Args, Serialize)]
pub struct CauseArgs {
    /// Model file; its family, hyperparameters and response are reused and
    /// retrained on a fresh split per trial.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset to resample; defaults to the one recorded in the model file,
    /// looked up from the working directory, then beside the model.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long, default_value = "shap,ice")]
    pub methods: String,
    #[arg(long, default_value = "factorial")]
    pub directions: DirectionSet,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub permutations: usize,
    #[arg(long)]
    pub background_limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Flat CSV, one row per trial, case, method and factor.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Experiment configuration for a model file and the CLI flags.
pub fn experiment_config(args: &CauseArgs, model: &ModelFile, fractions: [f64; 3]) -> CliResult<ExperimentConfig> {
    Ok(ExperimentConfig {
        response: model.response,
        spec: model.spec.clone(),
        methods: parse_methods(&args.methods)?,
        directions: args.directions.directions(),
        trials: args.trials,
        seed: PipelineSeeds::new(args.seed).cause,
        fractions,
        explainer: ExplainerConfig {
            permutations: args.permutations,
            background_limit: args.background_limit,
            grids: None,
        },
    })
}

pub fn evaluate(
    args: &CauseArgs,
    ctx: &Ctx,
    model: &ModelFile,
    data: &Dataset,
    factors: &[FactorSpec],
    fractions: [f64; 3],
) -> CliResult<Vec<PathBuf>> {
    let config = experiment_config(args, model, fractions)?;
    let mut report: CauseReport = run_controlled_experiments(data, &config)?;
    let run = RunConfig::new("evaluate-cause", args)?;
    report.run = run.to_value();
    ctx.write_json(&args.out, &report)?;
    let mut written = vec![args.out.clone()];
    if let Some(path) = &args.csv {
        ctx.write_csv(path, &run, |w| Ok(report.write_csv(w, factors)?))?;
        written.push(path.clone());
    }
    Ok(written)
}

pub fn exec(args: &CauseArgs, ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let factors = ctx.factors(args.factors.as_deref())?;
    let model = load_model(ctx, &args.model, &factors)?;
    let trained = echoed_args(&model, &args.model);
    let dataset = match (&args.dataset, &trained) {
        (Some(d), _) => d.clone(),
        (None, Ok(t)) => {
            let beside_model = args.model.parent().map(|dir| dir.join(&t.dataset));
            match beside_model {
                Some(p) if t.dataset.is_relative() && !ctx.path(&t.dataset).exists() && ctx.path(&p).exists() => p,
                _ => t.dataset.clone(),
            }
        }
        (None, Err(_)) => return Err(CliError::Usage("model file records no dataset; pass --dataset".into())),
    };
    let fractions = match &trained {
        Ok(t) => parse_fractions(&t.split)?,
        Err(_) => [0.6, 0.1, 0.3],
    };
    let data = ctx.dataset(&dataset, &factors)?;
    evaluate(args, ctx, &model, &data, &factors, fractions)
}
