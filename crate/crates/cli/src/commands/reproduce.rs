//! One-command end-to-end run: design, simulated data, splits, forest and
//! network models, H-statistics, PD curves, test-set attributions, cause
//! reports for both responses and the tidy report. All paths written into
//! artifacts are relative to the output directory, so two runs with the
//! same seed produce identical trees wherever they live.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser};
use serde::Serialize;
use xmold_core::doe::{stratified_split, write_csv};
use xmold_core::seed::PipelineSeeds;

use crate::artifact::{Ctx, RunConfig};
use crate::commands::{cause, doe, explain, report, simulate, train};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReproduceArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: PathBuf,
    /// Cause-analysis trials per response.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Network seeds to train and report.
    #[arg(long, default_value_t = 10)]
    pub network_seeds: usize,
    /// SHAP orderings per instance.
    #[arg(long, default_value_t = 128)]
    pub permutations: usize,
}

#[derive(Parser)]
#[command(no_binary_name = true)]
struct Wrap<T: Args> {
    #[command(flatten)]
    inner: T,
}

/// Parse one stage's flags so stage defaults match the standalone command.
fn stage<T: Args>(argv: &[String]) -> CliResult<T> {
    Wrap::<T>::try_parse_from(argv)
        .map(|w| w.inner)
        .map_err(|e| CliError::Usage(format!("internal stage arguments rejected: {e}")))
}

fn argv(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

pub fn exec(args: &ReproduceArgs, _ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    exec_timed(args, &mut |_, _| {})
}

/// [`exec`], reporting the wall time of each stage to `on_stage`. Timings
/// never reach the artifacts.
pub fn exec_timed(args: &ReproduceArgs, on_stage: &mut dyn FnMut(&str, Duration)) -> CliResult<Vec<PathBuf>> {
    let mut clock = Instant::now();
    let mut lap = |name: &str| {
        on_stage(name, clock.elapsed());
        clock = Instant::now();
    };
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let ctx = Ctx::under(&args.out_dir);
    let seed = args.seed.to_string();
    let trials = args.trials.to_string();
    let nets = args.network_seeds.to_string();
    let perms = args.permutations.to_string();
    let run = RunConfig::new("reproduce", args)?;
    let mut written = Vec::new();

    let params = simulate::load_params(&ctx, None)?;
    ctx.write_artifact(Path::new("surrogate.json"), &params, &run)?;
    written.push(PathBuf::from("surrogate.json"));
    lap("surrogate");

    written.extend(doe::generate(
        &stage(&argv(&["--seed", &seed, "--out", "design.csv"]))?,
        &ctx,
    )?);
    lap("design");
    written.extend(simulate::exec(
        &stage(&argv(&[
            "--design",
            "design.csv",
            "--params",
            "surrogate.json",
            "--seed",
            &seed,
            "--out",
            "dataset.csv",
        ]))?,
        &ctx,
    )?);
    lap("simulate");

    let factors = ctx.factors(None)?;
    let data = ctx.dataset(Path::new("dataset.csv"), &factors)?;
    let split_args: train::TrainArgs = stage(&argv(&["--dataset", "dataset.csv", "--seed", &seed, "--out", "unused"]))?;
    let split = stratified_split(
        &data,
        train::parse_fractions(&split_args.split)?,
        PipelineSeeds::new(args.seed).split,
    )?;
    let split_run = RunConfig::new(
        "reproduce split",
        &serde_json::json!({ "dataset": "dataset.csv", "seed": args.seed, "split": split_args.split }),
    )?;
    for (name, part) in [
        ("train.csv", &split.train),
        ("val.csv", &split.val),
        ("test.csv", &split.test),
    ] {
        ctx.write_csv(Path::new(name), &split_run, |w| Ok(write_csv(part, w)?))?;
        written.push(PathBuf::from(name));
    }
    lap("split");

    let fits: [(&str, &[&str]); 3] = [
        (
            "train forest",
            &[
                "--model",
                "forest",
                "--out",
                "model_forest.json",
                "--metrics",
                "metrics_forest.json",
            ],
        ),
        (
            "train network",
            &[
                "--model",
                "network",
                "--seeds",
                &nets,
                "--out",
                "model_network.json",
                "--metrics",
                "metrics_network.json",
            ],
        ),
        (
            "train forest planarity",
            &[
                "--model",
                "forest",
                "--response",
                "planarity_mm",
                "--out",
                "model_forest_planarity.json",
                "--metrics",
                "metrics_forest_planarity.json",
            ],
        ),
    ];
    for (name, extra) in fits {
        let mut a = argv(&["--dataset", "dataset.csv", "--seed", &seed]);
        a.extend(argv(extra));
        written.extend(train::train(&stage(&a)?, &ctx, &data)?);
        lap(name);
    }

    let explains: [(&str, &[&str]); 4] = [
        ("explain hstat", &["--method", "hstat", "--out", "hstat.json"]),
        (
            "explain pd",
            &["--method", "pd", "--out", "pd.json", "--emit-curves", "curves_pd.csv"],
        ),
        (
            "explain shap",
            &[
                "--method",
                "shap",
                "--background",
                "train.csv",
                "--permutations",
                &perms,
                "--out",
                "attributions_shap.json",
            ],
        ),
        (
            "explain ice",
            &[
                "--method",
                "ice",
                "--out",
                "attributions_ice.json",
                "--emit-curves",
                "curves_ice.csv",
            ],
        ),
    ];
    for (name, extra) in explains {
        let mut a = argv(&["--model", "model_forest.json", "--data", "test.csv", "--seed", &seed]);
        a.extend(argv(extra));
        written.extend(explain::exec(&stage(&a)?, &ctx)?);
        lap(name);
    }

    for (model, name) in [
        ("model_forest.json", "weight"),
        ("model_forest_planarity.json", "planarity"),
    ] {
        let (json, csv) = (format!("cause_{name}.json"), format!("cause_{name}.csv"));
        let a = argv(&[
            "--model",
            model,
            "--trials",
            &trials,
            "--seed",
            &seed,
            "--permutations",
            &perms,
            "--out",
            &json,
            "--csv",
            &csv,
        ]);
        written.extend(cause::exec(&stage(&a)?, &ctx)?);
        lap(&format!("cause {name}"));
    }

    written.extend(report::exec(
        &stage(&argv(&[
            "--attributions",
            "attributions_shap.json",
            "--attributions",
            "attributions_ice.json",
            "--cause",
            "cause_weight.json",
            "--cause",
            "cause_planarity.json",
            "--out",
            "report.csv",
        ]))?,
        &ctx,
    )?);
    lap("report");

    let mut files = Vec::new();
    for p in &written {
        let bytes = fs::metadata(ctx.path(p)).map_err(|e| CliError::io(p, e))?.len();
        files.push(serde_json::json!({ "path": p.display().to_string(), "bytes": bytes }));
    }
    files.sort_by(|a, b| a["path"].as_str().cmp(&b["path"].as_str()));
    ctx.write_artifact(Path::new("manifest.json"), &serde_json::json!({ "files": files }), &run)?;
    written.push(PathBuf::from("manifest.json"));
    Ok(written.into_iter().map(|p| args.out_dir.join(p)).collect())
}
