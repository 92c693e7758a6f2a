use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use xmold_core::cause::{select_background, settings_symbols};
use xmold_core::explain::{
    default_grids, h_report, ice_curves, ice_impact_batch, pd_1d, shap_batch, shap_exact, Grid, HReport, PdCurve,
};
use xmold_core::seed;
use xmold_core::{Dataset, Error, FactorSpec, Method, ModelFile, Predictor, Response};

use crate::artifact::{Ctx, RunConfig};
use crate::error::{CliError, CliResult};

pub const ATTRIBUTION_SCHEMA: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExplainMethod {
    Shap,
    ShapExact,
    Ice,
    Pd,
    Hstat,
}

impl ExplainMethod {
    /// Impact method used when ranking this method's per-instance values.
    pub fn impact_method(self) -> Option<Method> {
        match self {
            ExplainMethod::Shap | ExplainMethod::ShapExact => Some(Method::Shap),
            ExplainMethod::Ice => Some(Method::Ice),
            ExplainMethod::Pd | ExplainMethod::Hstat => None,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    /// Trained model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub method: ExplainMethod,
    /// Instances to explain (dataset CSV).
    #[arg(long)]
    pub data: PathBuf,
    /// Background rows for SHAP (dataset CSV).
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Factor definition file; defaults to the bundled six-factor table.
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub permutations: usize,
    /// Keep at most this many seeded background rows.
    #[arg(long)]
    pub background_limit: Option<usize>,
    /// Rows drawn from `--data` for the H-statistic.
    #[arg(long, default_value_t = 100)]
    pub sample: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write PD or ICE curve points as CSV.
    #[arg(long)]
    pub emit_curves: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAttribution {
    /// Row of the data file.
    pub instance: usize,
    pub combination_id: u32,
    pub cycle_index: u32,
    pub symbols: String,
    pub ascii: String,
    /// Signed φ for SHAP, σ for ICE.
    pub values: Vec<f64>,
    pub prediction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedH {
    pub factors: [String; 2],
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HStatOutput {
    pub report: HReport,
    pub pairs: Vec<NamedH>,
    /// Factor names by descending total interaction strength.
    pub ranking: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionFile {
    pub schema: u64,
    pub method: ExplainMethod,
    pub response: Response,
    pub factors: Vec<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub instances: Vec<InstanceAttribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd: Option<Vec<PdCurve>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hstat: Option<HStatOutput>,
    #[serde(default)]
    pub run: Value,
}

impl AttributionFile {
    pub fn from_json(json: &str) -> xmold_core::Result<Self> {
        let value: Value = serde_json::from_str(json)?;
        let schema = value.get("schema").and_then(Value::as_u64).unwrap_or(0);
        if schema != ATTRIBUTION_SCHEMA {
            return Err(Error::Schema {
                found: schema,
                expected: ATTRIBUTION_SCHEMA,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Load a model file and check it against the factor definitions.
pub fn load_model(ctx: &Ctx, path: &Path, factors: &[FactorSpec]) -> CliResult<ModelFile> {
    let file = ModelFile::from_json(&ctx.read_string(path)?).map_err(|e| CliError::in_file(path, e))?;
    let names: Vec<&str> = factors.iter().map(|f| f.name.as_str()).collect();
    if file.factors != names {
        return Err(CliError::in_file(
            path,
            Error::Format(format!("model factors {:?} differ from {:?}", file.factors, names)),
        ));
    }
    Ok(file)
}

/// Distinct rows of `points` and, per input row, the index of its distinct row.
fn distinct_rows(points: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<usize>) {
    let mut first = Vec::new();
    let mut slot_of: HashMap<Vec<u64>, usize> = HashMap::new();
    let slots = points
        .outer_iter()
        .enumerate()
        .map(|(r, row)| {
            let key = row.iter().map(|v| v.to_bits()).collect();
            *slot_of.entry(key).or_insert_with(|| {
                first.push(r);
                first.len() - 1
            })
        })
        .collect();
    (points.select(Axis(0), &first), slots)
}

fn instances_from(
    data: &Dataset,
    values: &[Vec<f64>],
    slots: &[usize],
    predictions: &[f64],
) -> Vec<InstanceAttribution> {
    let design = &data.design;
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    order.sort_by_key(|&r| (design.combination_id[r], design.cycle_index[r], r));
    order
        .into_iter()
        .map(|r| {
            let (symbols, ascii) =
                settings_symbols(data.factors(), design.points.row(r).as_slice().expect("row-major"));
            InstanceAttribution {
                instance: r,
                combination_id: design.combination_id[r],
                cycle_index: design.cycle_index[r],
                symbols,
                ascii,
                values: values[slots[r]].clone(),
                prediction: predictions[r],
            }
        })
        .collect()
}

/// Compute the attribution file for `data`. `background` is required for the
/// SHAP methods.
pub fn attribute(
    model: &ModelFile,
    data: &Dataset,
    background: Option<&Dataset>,
    args: &ExplainArgs,
) -> CliResult<(AttributionFile, Vec<CurveRow>)> {
    let p = &model.model;
    let factors = data.factors();
    let mut file = AttributionFile {
        schema: ATTRIBUTION_SCHEMA,
        method: args.method,
        response: model.response,
        factors: model.factors.clone(),
        seed: args.seed,
        baseline: None,
        permutations: None,
        background_size: None,
        grids: None,
        instances: Vec::new(),
        pd: None,
        hstat: None,
        run: Value::Null,
    };
    let mut curves = Vec::new();
    let grids = default_grids(factors);
    let predictions = p.predict(data.points())?.to_vec();
    match args.method {
        ExplainMethod::Shap | ExplainMethod::ShapExact => {
            let bg_data = background
                .ok_or_else(|| CliError::Usage(format!("--method {} needs --background", method_name(args.method))))?;
            let bg = select_background(
                bg_data.points(),
                args.background_limit,
                seed::derive_str(args.seed, "background"),
            );
            let (rows, slots) = distinct_rows(data.points());
            let results = if args.method == ExplainMethod::Shap {
                file.permutations = Some(args.permutations);
                shap_batch(p, rows.view(), bg.view(), args.permutations, args.seed)?
            } else {
                (0..rows.nrows())
                    .into_par_iter()
                    .map(|i| shap_exact(p, rows.row(i), bg.view()))
                    .collect::<xmold_core::Result<Vec<_>>>()?
            };
            file.baseline = results.first().map(|r| r.baseline);
            file.background_size = Some(bg.nrows());
            let phi: Vec<Vec<f64>> = results.into_iter().map(|r| r.phi).collect();
            file.instances = instances_from(data, &phi, &slots, &predictions);
        }
        ExplainMethod::Ice => {
            let (rows, slots) = distinct_rows(data.points());
            let sigma = ice_impact_batch(p, rows.view(), &grids)?;
            file.grids = Some(grids.iter().map(|g| g.values().to_vec()).collect());
            file.instances = instances_from(data, &sigma, &slots, &predictions);
            if args.emit_curves.is_some() {
                for (j, grid) in grids.iter().enumerate() {
                    let sets = ice_curves(p, rows.view(), j, grid)?;
                    for inst in &file.instances {
                        let set = &sets[slots[inst.instance]];
                        for (x, y) in set.grid.iter().zip(&set.values) {
                            curves.push(CurveRow {
                                instance: Some(inst.instance),
                                factor: model.factors[j].clone(),
                                value: *x,
                                prediction: *y,
                            });
                        }
                    }
                }
            }
        }
        ExplainMethod::Pd => {
            let pd = (0..factors.len())
                .map(|j| pd_1d(p, data.points(), j, &Grid::levels(&factors[j])))
                .collect::<xmold_core::Result<Vec<_>>>()?;
            for c in &pd {
                for (x, y) in c.grid.iter().zip(&c.values) {
                    curves.push(CurveRow {
                        instance: None,
                        factor: model.factors[c.factor].clone(),
                        value: *x,
                        prediction: *y,
                    });
                }
            }
            file.grids = Some(pd.iter().map(|c| c.grid.clone()).collect());
            file.pd = Some(pd);
        }
        ExplainMethod::Hstat => {
            let sample = select_background(
                data.points(),
                Some(args.sample),
                seed::derive_str(args.seed, "hstat-sample"),
            );
            let report = h_report(p, sample.view())?;
            let name = |j: usize| model.factors[j].clone();
            file.hstat = Some(HStatOutput {
                pairs: report
                    .pairs
                    .iter()
                    .map(|q| NamedH {
                        factors: [name(q.j), name(q.k)],
                        h: q.h,
                    })
                    .collect(),
                ranking: report.ranking().into_iter().map(name).collect(),
                report,
            });
        }
    }
    Ok((file, curves))
}

fn method_name(m: ExplainMethod) -> String {
    m.to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub instance: Option<usize>,
    pub factor: String,
    pub value: f64,
    pub prediction: f64,
}

pub fn write_curves(w: &mut dyn Write, method: ExplainMethod, rows: &[CurveRow]) -> CliResult<()> {
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    csv.write_record(["method", "instance", "factor", "value", "prediction"])?;
    let name = method_name(method);
    for r in rows {
        csv.write_record([
            name.clone(),
            r.instance.map(|i| i.to_string()).unwrap_or_default(),
            r.factor.clone(),
            r.value.to_string(),
            r.prediction.to_string(),
        ])?;
    }
    csv.flush().map_err(|e| CliError::Io {
        path: "curves".into(),
        source: e,
    })
}

pub fn exec(args: &ExplainArgs, ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    if args.emit_curves.is_some() && !matches!(args.method, ExplainMethod::Ice | ExplainMethod::Pd) {
        return Err(CliError::Usage("--emit-curves applies to --method ice or pd".into()));
    }
    let factors = ctx.factors(args.factors.as_deref())?;
    let model = load_model(ctx, &args.model, &factors)?;
    let data = ctx.dataset(&args.data, &factors)?;
    let background = args.background.as_ref().map(|b| ctx.dataset(b, &factors)).transpose()?;
    let (file, curves) = attribute(&model, &data, background.as_ref(), args)?;
    let run = RunConfig::new("explain", args)?;
    ctx.write_artifact(&args.out, &file, &run)?;
    let mut written = vec![args.out.clone()];
    if let Some(path) = &args.emit_curves {
        ctx.write_csv(path, &run, |w| write_curves(w, args.method, &curves))?;
        written.push(path.clone());
    }
    Ok(written)
}
