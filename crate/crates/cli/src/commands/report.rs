use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use xmold_core::cause::{normalize_and_rank, perturbation_cases, settings_symbols};
use xmold_core::{CauseReport, Error, FactorSpec};

use crate::artifact::{Ctx, RunConfig};
use crate::commands::explain::AttributionFile;
use crate::error::{CliError, CliResult};

pub const TIDY_HEADER: [&str; 9] = [
    "trial",
    "instance",
    "combination_id",
    "symbol",
    "ascii",
    "method",
    "factor",
    "normalized_impact",
    "std",
];

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Attribution files from `explain` (repeatable).
    #[arg(long)]
    pub attributions: Vec<PathBuf>,
    /// Cause reports from `evaluate-cause` (repeatable).
    #[arg(long)]
    pub cause: Vec<PathBuf>,
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Tidy rows from per-instance attributions. Trial and std are empty.
pub fn attribution_rows(file: &AttributionFile) -> xmold_core::Result<Vec<[String; 9]>> {
    let Some(method) = file.method.impact_method() else {
        return Err(Error::InvalidParameter(format!(
            "attribution file for {:?} has no per-instance impacts",
            file.method
        )));
    };
    let name = serde_json::to_value(file.method)?
        .as_str()
        .unwrap_or_default()
        .to_string();
    let mut rows = Vec::new();
    for inst in &file.instances {
        let iv = normalize_and_rank(&inst.values, method, inst.instance)?;
        for (j, factor) in file.factors.iter().enumerate() {
            rows.push([
                String::new(),
                inst.instance.to_string(),
                inst.combination_id.to_string(),
                inst.symbols.clone(),
                inst.ascii.clone(),
                name.clone(),
                factor.clone(),
                iv.normalized[j].to_string(),
                String::new(),
            ]);
        }
    }
    Ok(rows)
}

/// Tidy rows from a cause report: one row per trial, case, method and
/// factor, then a `mean` row per case, method and factor with the
/// across-trial standard deviation. The instance column holds the case index.
pub fn cause_rows(report: &CauseReport, factors: &[FactorSpec]) -> xmold_core::Result<Vec<[String; 9]>> {
    let names: Vec<&str> = factors.iter().map(|f| f.name.as_str()).collect();
    if report.factors != names {
        return Err(Error::Format(format!(
            "cause report factors {:?} differ from {:?}",
            report.factors, names
        )));
    }
    let symbols: Vec<(String, String)> = perturbation_cases(factors, &report.config.directions)
        .iter()
        .map(|c| settings_symbols(factors, &c.settings))
        .collect();
    let sym = |c: usize| symbols.get(c).cloned().unwrap_or_default();
    let mut rows = Vec::new();
    for o in &report.outcomes {
        let (g, a) = sym(o.case);
        for (j, factor) in report.factors.iter().enumerate() {
            rows.push([
                o.trial.to_string(),
                o.case.to_string(),
                String::new(),
                g.clone(),
                a.clone(),
                o.method.to_string(),
                factor.clone(),
                o.impacts.normalized[j].to_string(),
                String::new(),
            ]);
        }
    }
    for s in &report.cases {
        let (g, a) = sym(s.case);
        for (j, factor) in report.factors.iter().enumerate() {
            rows.push([
                "mean".into(),
                s.case.to_string(),
                String::new(),
                g.clone(),
                a.clone(),
                s.method.to_string(),
                factor.clone(),
                s.mean_normalized[j].to_string(),
                s.std_normalized[j].to_string(),
            ]);
        }
    }
    Ok(rows)
}

pub fn write_tidy(w: &mut dyn Write, rows: &[[String; 9]]) -> CliResult<()> {
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    csv.write_record(TIDY_HEADER)?;
    for r in rows {
        csv.write_record(r)?;
    }
    csv.flush().map_err(|e| CliError::Io {
        path: "report".into(),
        source: e,
    })
}

pub fn exec(args: &ReportArgs, ctx: &Ctx) -> CliResult<Vec<PathBuf>> {
    let factors = ctx.factors(args.factors.as_deref())?;
    let mut rows = Vec::new();
    for path in &args.attributions {
        let file = AttributionFile::from_json(&ctx.read_string(path)?).map_err(|e| CliError::in_file(path, e))?;
        rows.extend(attribution_rows(&file).map_err(|e| CliError::in_file(path, e))?);
    }
    for path in &args.cause {
        let report = CauseReport::from_json(&ctx.read_string(path)?).map_err(|e| CliError::in_file(path, e))?;
        rows.extend(cause_rows(&report, &factors).map_err(|e| CliError::in_file(path, e))?);
    }
    let run = RunConfig::new("report", args)?;
    ctx.write_csv(&args.out, &run, |w| write_tidy(w, &rows))?;
    Ok(vec![args.out.clone()])
}
