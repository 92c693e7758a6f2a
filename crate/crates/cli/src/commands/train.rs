use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use xmold_core::doe::stratified_split;
use xmold_core::models::{compute_metrics, metrics::rsmae, ForestParams, MetricsReport, NetworkParams};
use xmold_core::seed::{self, PipelineSeeds};
use xmold_core::{Dataset, Error, ModelFile, ModelKind, ModelSpec, Predictor, Response, Split, TrainedModel};

use crate::artifact::{Ctx, RunConfig};
use crate::error::{CliError, CliResult};

pub const METRICS_SCHEMA: u64 = 1;

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset CSV from `simulate`.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long, default_value = "weight_g")]
    pub response: Response,
    #[arg(long, default_value = "forest")]
    pub model: ModelKind,
    /// Train, validation and test fractions.
    #[arg(long, default_value = "0.6,0.1,0.3")]
    pub split: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub trees: usize,
    #[arg(long, default_value_t = 2)]
    pub min_leaf: usize,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Hidden layer widths.
    #[arg(long, default_value = "8,4")]
    pub hidden: String,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    /// Relative training loss above which a network run counts as stagnated.
    #[arg(long, default_value_t = 0.05)]
    pub stagnation_threshold: f64,
    /// Reseeding attempts after a stagnated network run.
    #[arg(long, default_value_t = 0)]
    pub retries: usize,
    /// Train this many seeds, report all, keep the best by validation RSMAE.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

pub fn parse_fractions(s: &str) -> CliResult<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--split expects three numbers, got `{s}`")))?;
    <[f64; 3]>::try_from(parts).map_err(|_| CliError::Usage(format!("--split expects three numbers, got `{s}`")))
}

fn parse_widths(s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--hidden expects comma-separated widths, got `{s}`")))
}

impl TrainArgs {
    pub fn spec(&self) -> CliResult<ModelSpec> {
        let seeds = PipelineSeeds::new(self.seed);
        Ok(match self.model {
            ModelKind::Forest => ModelSpec::Forest(ForestParams {
                n_trees: self.trees,
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
                bootstrap: true,
                seed: seeds.forest,
            }),
            ModelKind::Network => ModelSpec::Network(NetworkParams {
                hidden: parse_widths(&self.hidden)?,
                max_iter: self.max_iter,
                l2: self.l2,
                seed: seeds.network,
                stagnation_threshold: self.stagnation_threshold,
                retries: self.retries,
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedStatus {
    Ok,
    Stagnated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub status: SeedStatus,
    pub relative_loss: Option<f64>,
    pub val_rsmae: Option<f64>,
    pub test_rsmae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub schema: u64,
    pub response: Response,
    pub kind: ModelKind,
    pub best_seed: u64,
    pub train: MetricsReport,
    pub val: MetricsReport,
    pub test: MetricsReport,
    /// Every seed tried, stagnated ones included.
    pub seeds: Vec<SeedRun>,
    #[serde(default)]
    pub run: Value,
}

fn split_rsmae(model: &TrainedModel, data: &Dataset, response: Response) -> CliResult<f64> {
    let pred = model.predict(data.points())?;
    Ok(rsmae(pred.as_slice().expect("contiguous"), data.response(response)?)?)
}

fn metrics(
    model: &TrainedModel,
    data: &Dataset,
    response: Response,
    name: &str,
    seed: u64,
) -> CliResult<MetricsReport> {
    let pred = model.predict(data.points())?;
    Ok(compute_metrics(
        pred.as_slice().expect("contiguous"),
        data.response(response)?,
        name,
        seed,
    )?)
}

/// Fit `seeds` models from `spec`, keeping the best by validation RSMAE.
pub fn fit_best(
    spec: &ModelSpec,
    split: &Split,
    response: Response,
    seeds: usize,
) -> CliResult<(TrainedModel, u64, Vec<SeedRun>)> {
    if seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let mut runs = Vec::new();
    let mut best: Option<(f64, TrainedModel, u64)> = None;
    let mut last_err = None;
    for i in 0..seeds {
        let s = if i == 0 {
            spec.seed()
        } else {
            seed::derive(spec.seed(), i as u64)
        };
        match spec.with_seed(s).fit(&split.train, &split.val, response) {
            Ok(model) => {
                let val = split_rsmae(&model, &split.val, response)?;
                let test = split_rsmae(&model, &split.test, response)?;
                let relative_loss = match &model {
                    TrainedModel::Network(n) => n.training.as_ref().map(|t| t.relative_loss),
                    TrainedModel::Forest(_) => None,
                };
                runs.push(SeedRun {
                    seed: s,
                    status: SeedStatus::Ok,
                    relative_loss,
                    val_rsmae: Some(val),
                    test_rsmae: Some(test),
                });
                if best.as_ref().is_none_or(|b| val < b.0) {
                    best = Some((val, model, s));
                }
            }
            Err(Error::Stagnated { relative_loss, .. }) => {
                runs.push(SeedRun {
                    seed: s,
                    status: SeedStatus::Stagnated,
                    relative_loss: Some(relative_loss),
                    val_rsmae: None,
                    test_rsmae: None,
                });
                last_err = Some(Error::Stagnated {
                    seed: s,
                    relative_loss,
                    threshold: match spec {
                        ModelSpec::Network(p) => p.stagnation_threshold,
                        ModelSpec::Forest(_) => f64::NAN,
                    },
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    match best {
        Some((_, model, s)) => Ok((model, s, runs)),
        None => Err(last_err.expect("every seed stagnated").into()),
    }
}

/// Train and write the model and optional metrics file. `dataset` is the
/// path recorded in the echo; `data` is its contents.
pub fn train(args: &TrainArgs, ctx: &Ctx, data: &Dataset) -> CliResult<Vec<PathBuf>> {
    let fractions = parse_fractions(&args.split)?;
    let spec = args.spec()?;
    let split = stratified_split(data, fractions, PipelineSeeds::new(args.seed).split)?;
    for (name, part) in [
        ("training", &split.train),
        ("validation", &split.val),
        ("test", &split.test),
    ] {
        if part.n_rows() == 0 {
            return Err(CliError::Usage(format!(
                "{name} split is empty; use more replicates or a larger {name} fraction"
            )));
        }
    }
    let (model, best_seed, runs) = fit_best(&spec, &split, args.response, args.seeds)?;
    let run = RunConfig::new("train", args)?;
    let names = data.factors().iter().map(|f| f.name.clone()).collect();
    let mut file = ModelFile::new(args.response, names, spec.with_seed(best_seed), model);
    file.config = run.to_value();
    ctx.write_json(&args.out, &file)?;
    let mut written = vec![args.out.clone()];
    if let Some(path) = &args.metrics {
        let boot = seed::derive_str(args.seed, "bootstrap");
        let m = MetricsFile {
            schema: METRICS_SCHEMA,
            response: args.response,
            kind: args.model,
            best_seed,
            train: metrics(&file.model, &split.train, args.response, "train", boot)?,
            val: metrics(&file.model, &split.val, args.response, "val", boot)?,
            test: metrics(&file.model, &split.test, args.response, "test", boot)?,
            seeds: runs,
            run: Value::Null,
        };
        ctx.write_artifact(path, &m, &run)?;
        written.push(path.clone());
    }
    Ok(written)
}

pub fn exec(args: &TrainArgs, ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let factors = ctx.factors(args.factors.as_deref())?;
    let data = ctx.dataset(&args.dataset, &factors)?;
    train(args, ctx, &data)
}

/// Training arguments echoed in a model file.
pub fn echoed_args(file: &ModelFile, path: &Path) -> CliResult<TrainArgs> {
    let args = file.config.get("args").cloned().unwrap_or(Value::Null);
    serde_json::from_value(args).map_err(|_| {
        CliError::in_file(
            path,
            Error::Format("model file carries no training configuration".into()),
        )
    })
}
