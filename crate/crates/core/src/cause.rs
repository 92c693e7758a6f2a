//! Root-cause scoring: impact vectors from attributions, controlled
//! single-factor perturbation experiments, and test-set impact curves.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::doe::{stratified_split, Dataset, FactorSpec, Level, Response};
use crate::error::{Error, Result};
use crate::explain::{default_grids, ice_impact, ice_impact_batch, shap_batch, shap_permutation, Grid};
use crate::models::{compute_metrics, ModelSpec};
use crate::predictor::Predictor;
use crate::seed;

pub const REPORT_SCHEMA: u64 = 1;
/// Normalized impact assigned to every factor when all raw impacts tie.
pub const TIE_VALUE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Shap,
    Ice,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Shap, Method::Ice];
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shap" => Ok(Method::Shap),
            "ice" => Ok(Method::Ice),
            other => Err(Error::InvalidParameter(format!("unknown attribution method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Shap => "shap",
            Method::Ice => "ice",
        })
    }
}

/// Parse a comma-separated method list, dropping repeats.
pub fn parse_methods(s: &str) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    for part in s.split(',') {
        let m: Method = part.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

/// Per-factor impacts of one instance under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactVector {
    pub instance: usize,
    pub method: Method,
    /// `|φ|` for SHAP, σ for ICE.
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// 1 for the highest impact.
    pub rank: Vec<usize>,
}

impl ImpactVector {
    /// Factors ranked `1..=k`, best first.
    pub fn top(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.rank.len()).filter(|&j| self.rank[j] <= k).collect();
        idx.sort_by_key(|&j| self.rank[j]);
        idx
    }

    pub fn top1(&self) -> usize {
        self.top(1)[0]
    }
}

/// Min-max normalize and rank raw impacts. SHAP values enter as `|φ|`; ICE
/// spreads must be non-negative. Ties rank by factor order.
pub fn normalize_and_rank(values: &[f64], method: Method, instance: usize) -> Result<ImpactVector> {
    if values.is_empty() {
        return Err(Error::Empty("impact vector"));
    }
    if let Some(col) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { row: instance, col });
    }
    let raw: Vec<f64> = match method {
        Method::Shap => values.iter().map(|v| v.abs()).collect(),
        Method::Ice => {
            if values.iter().any(|v| *v < 0.0) {
                return Err(Error::InvalidParameter("ICE impacts must be non-negative".into()));
            }
            values.to_vec()
        }
    };
    let (lo, hi) = raw
        .iter()
        .fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
    let normalized = if hi > lo {
        raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![TIE_VALUE; raw.len()]
    };
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    let mut rank = vec![0; raw.len()];
    for (pos, &j) in order.iter().enumerate() {
        rank[j] = pos + 1;
    }
    Ok(ImpactVector {
        instance,
        method,
        raw,
        normalized,
        rank,
    })
}

/// Level a perturbed factor is moved to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    AxialLow,
    FactorialLow,
    FactorialHigh,
    AxialHigh,
}

impl Direction {
    pub fn level(self) -> Level {
        match self {
            Direction::AxialLow => Level::AxialLow,
            Direction::FactorialLow => Level::FactorialLow,
            Direction::FactorialHigh => Level::FactorialHigh,
            Direction::AxialHigh => Level::AxialHigh,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::AxialLow => "axial-low",
            Direction::FactorialLow => "factorial-low",
            Direction::FactorialHigh => "factorial-high",
            Direction::AxialHigh => "axial-high",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionSet {
    Factorial,
    Axial,
    Both,
}

impl DirectionSet {
    pub fn directions(self) -> Vec<Direction> {
        match self {
            DirectionSet::Factorial => vec![Direction::FactorialLow, Direction::FactorialHigh],
            DirectionSet::Axial => vec![Direction::AxialLow, Direction::AxialHigh],
            DirectionSet::Both => vec![
                Direction::AxialLow,
                Direction::FactorialLow,
                Direction::FactorialHigh,
                Direction::AxialHigh,
            ],
        }
    }
}

impl FromStr for DirectionSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "factorial" => Ok(DirectionSet::Factorial),
            "axial" => Ok(DirectionSet::Axial),
            "both" => Ok(DirectionSet::Both),
            other => Err(Error::InvalidParameter(format!("unknown direction set `{other}`"))),
        }
    }
}

/// Glyph string and ASCII codes for a settings row, one per factor.
/// Values off the level grid show as `?`.
pub fn settings_symbols(factors: &[FactorSpec], row: &[f64]) -> (String, String) {
    let levels: Vec<Option<Level>> = factors.iter().zip(row).map(|(f, v)| f.level_of(*v)).collect();
    let glyphs = levels.iter().map(|l| l.map_or('?', Level::glyph)).collect();
    let ascii = levels
        .iter()
        .map(|l| l.map_or("?", Level::ascii))
        .collect::<Vec<_>>()
        .join(" ");
    (glyphs, ascii)
}

/// All factors at centre except `factor`, which sits at `direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationCase {
    pub factor: usize,
    pub direction: Direction,
    pub settings: Vec<f64>,
    /// Identical instances evaluated for the case.
    pub replicates: usize,
}

impl PerturbationCase {
    pub fn new(factors: &[FactorSpec], factor: usize, direction: Direction) -> Result<Self> {
        if factor >= factors.len() {
            return Err(Error::FactorIndex {
                index: factor,
                count: factors.len(),
            });
        }
        let mut settings: Vec<f64> = factors.iter().map(FactorSpec::centre).collect();
        settings[factor] = factors[factor].level(direction.level());
        Ok(Self {
            factor,
            direction,
            settings,
            replicates: 1,
        })
    }
}

/// Cases for every factor, factor-major, directions in the given order.
pub fn perturbation_cases(factors: &[FactorSpec], directions: &[Direction]) -> Vec<PerturbationCase> {
    (0..factors.len())
        .flat_map(|j| directions.iter().map(move |&d| (j, d)))
        .map(|(j, d)| PerturbationCase::new(factors, j, d).expect("index in range"))
        .collect()
}

/// Explainer settings shared by every attribution in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    /// SHAP orderings per instance.
    pub permutations: usize,
    /// Cap on background rows drawn from the training split; `None` keeps all.
    pub background_limit: Option<usize>,
    /// ICE grids; `None` uses each factor's levels.
    pub grids: Option<Vec<Grid>>,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            permutations: 128,
            background_limit: None,
            grids: None,
        }
    }
}

impl ExplainerConfig {
    fn grids(&self, factors: &[FactorSpec]) -> Result<Vec<Grid>> {
        match &self.grids {
            Some(g) if g.len() != factors.len() => Err(Error::InvalidParameter(format!(
                "expected {} ICE grids, got {}",
                factors.len(),
                g.len()
            ))),
            Some(g) => Ok(g.clone()),
            None => Ok(default_grids(factors)),
        }
    }
}

/// Background rows for SHAP: all of `points`, or a seeded subset of
/// `limit` rows kept in their original order.
pub fn select_background(points: ArrayView2<'_, f64>, limit: Option<usize>, seed: u64) -> Array2<f64> {
    match limit {
        Some(k) if k < points.nrows() => {
            let mut rows: Vec<usize> = (0..points.nrows()).collect();
            rows.shuffle(&mut seed::rng(seed::derive_str(seed, "background")));
            rows.truncate(k.max(1));
            rows.sort_unstable();
            points.select(Axis(0), &rows)
        }
        _ => points.to_owned(),
    }
}

fn attribute_one<P: Predictor + ?Sized>(
    predictor: &P,
    row: ArrayView1<'_, f64>,
    method: Method,
    background: ArrayView2<'_, f64>,
    permutations: usize,
    grids: &[Grid],
    seed: u64,
    instance: usize,
) -> Result<ImpactVector> {
    let raw = match method {
        Method::Shap => shap_permutation(predictor, row, background, permutations, seed)?.phi,
        Method::Ice => ice_impact(predictor, row, grids)?,
    };
    normalize_and_rank(&raw, method, instance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub response: Response,
    pub spec: ModelSpec,
    pub methods: Vec<Method>,
    pub directions: Vec<Direction>,
    pub trials: usize,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub explainer: ExplainerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            response: Response::Weight,
            spec: ModelSpec::default_for(crate::models::ModelKind::Forest),
            methods: Method::ALL.to_vec(),
            directions: DirectionSet::Factorial.directions(),
            trials: 10,
            seed: 42,
            fractions: [0.6, 0.1, 0.3],
            explainer: ExplainerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub trial: usize,
    pub case: usize,
    pub factor: usize,
    pub direction: Direction,
    pub method: Method,
    pub top1: usize,
    pub hit: bool,
    pub top3_hit: bool,
    pub impacts: ImpactVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub split_seed: u64,
    pub model_seed: u64,
    pub explain_seed: u64,
    /// Test-split RSMAE of the trial's model, percent.
    pub test_rsmae: f64,
    /// Top-1 accuracy per method, in `methods` order.
    pub accuracy: Vec<f64>,
}

/// Mean and sample standard deviation across trials for one case and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: usize,
    pub factor: usize,
    pub direction: Direction,
    pub symbols: String,
    pub method: Method,
    pub hit_rate: f64,
    pub mean_normalized: Vec<f64>,
    pub std_normalized: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseHits {
    pub factor: usize,
    pub direction: Direction,
    pub hits: usize,
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAccuracy {
    pub method: Method,
    /// Pooled top-1 accuracy, hits over cases.
    pub accuracy: f64,
    pub top3: f64,
    pub cases: usize,
    pub trial_mean: f64,
    pub trial_std: f64,
    pub trial_min: f64,
    pub trial_max: f64,
    /// Share of cases whose top-1 factor was each factor.
    pub top1_share: Vec<f64>,
    pub by_case: Vec<CaseHits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseReport {
    pub schema: u64,
    pub factors: Vec<String>,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialSummary>,
    pub cases: Vec<CaseSummary>,
    pub accuracy: Vec<MethodAccuracy>,
    pub outcomes: Vec<CaseOutcome>,
    /// Resolved run configuration of the producing tool, if any.
    #[serde(default)]
    pub run: serde_json::Value,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Top-1 and top-3 accuracy per method, with a per-trial spread and a
/// breakdown by perturbed factor and direction.
pub fn attribution_accuracy(outcomes: &[CaseOutcome], n_factors: usize) -> Result<Vec<MethodAccuracy>> {
    if outcomes.is_empty() {
        return Err(Error::Empty("cause report has no outcomes"));
    }
    let mut methods: Vec<Method> = outcomes.iter().map(|o| o.method).collect();
    methods.sort();
    methods.dedup();
    let mut out = Vec::new();
    for method in methods {
        let mine: Vec<&CaseOutcome> = outcomes.iter().filter(|o| o.method == method).collect();
        let n = mine.len() as f64;
        let hits = mine.iter().filter(|o| o.hit).count();
        let top3 = mine.iter().filter(|o| o.top3_hit).count();
        let mut per_trial: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        let mut per_case: BTreeMap<(usize, Direction), (usize, usize)> = BTreeMap::new();
        let mut top1_counts = vec![0usize; n_factors];
        for o in &mine {
            let t = per_trial.entry(o.trial).or_default();
            t.0 += o.hit as usize;
            t.1 += 1;
            let c = per_case.entry((o.factor, o.direction)).or_default();
            c.0 += o.hit as usize;
            c.1 += 1;
            if let Some(slot) = top1_counts.get_mut(o.top1) {
                *slot += 1;
            }
        }
        let trial_acc: Vec<f64> = per_trial.values().map(|(h, c)| *h as f64 / *c as f64).collect();
        let (trial_mean, trial_std) = mean_std(&trial_acc);
        out.push(MethodAccuracy {
            method,
            accuracy: hits as f64 / n,
            top3: top3 as f64 / n,
            cases: mine.len(),
            trial_mean,
            trial_std,
            trial_min: trial_acc.iter().copied().fold(f64::MAX, f64::min),
            trial_max: trial_acc.iter().copied().fold(f64::MIN, f64::max),
            top1_share: top1_counts.iter().map(|c| *c as f64 / n).collect(),
            by_case: per_case
                .into_iter()
                .map(|((factor, direction), (hits, cases))| CaseHits {
                    factor,
                    direction,
                    hits,
                    cases,
                })
                .collect(),
        });
    }
    Ok(out)
}

/// Seeds used by trial `t` of a run seeded with `seed`.
pub fn trial_seeds(seed: u64, t: usize) -> (u64, u64, u64) {
    let trial = seed::derive(seed::derive_str(seed, "trial"), t as u64);
    (
        seed::derive_str(trial, "split"),
        seed::derive_str(trial, "model"),
        seed::derive_str(trial, "explain"),
    )
}

/// Controlled perturbation experiments. Each trial draws a fresh split,
/// retrains the model, and attributes every perturbation case with every
/// method; results are reduced in (trial, method, case) order.
pub fn run_controlled_experiments(dataset: &Dataset, config: &ExperimentConfig) -> Result<CauseReport> {
    if config.trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    if config.methods.is_empty() || config.directions.is_empty() {
        return Err(Error::InvalidParameter(
            "methods and directions must be nonempty".into(),
        ));
    }
    let factors = dataset.factors();
    let grids = config.explainer.grids(factors)?;
    let cases = perturbation_cases(factors, &config.directions);
    let mut trials = Vec::new();
    let mut outcomes = Vec::new();

    for t in 0..config.trials {
        let (split_seed, model_seed, explain_seed) = trial_seeds(config.seed, t);
        let trial_ctx = |e: Error| e.with_context(format!("trial {t}"));
        let split = stratified_split(dataset, config.fractions, split_seed).map_err(trial_ctx)?;
        let model = config
            .spec
            .with_seed(model_seed)
            .fit(&split.train, &split.val, config.response)
            .map_err(trial_ctx)?;
        let test_pred = model.predict(split.test.points()).map_err(trial_ctx)?;
        let test_rsmae = compute_metrics(
            test_pred.as_slice().expect("contiguous"),
            split.test.response(config.response)?,
            "test",
            split_seed,
        )
        .map_err(trial_ctx)?
        .rsmae;
        let background = select_background(split.train.points(), config.explainer.background_limit, explain_seed);

        let mut accuracy = Vec::new();
        for &method in &config.methods {
            let impacts: Vec<ImpactVector> = cases
                .par_iter()
                .enumerate()
                .map(|(c, case)| {
                    let row = ArrayView1::from(&case.settings);
                    attribute_one(
                        &model,
                        row,
                        method,
                        background.view(),
                        config.explainer.permutations,
                        &grids,
                        seed::derive(explain_seed, c as u64),
                        c,
                    )
                    .map_err(|e| {
                        e.with_context(format!(
                            "trial {t}, {method} on {} {}",
                            factors[case.factor].name, case.direction
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let mut hits = 0;
            for (c, (case, iv)) in cases.iter().zip(impacts).enumerate() {
                let top1 = iv.top1();
                hits += (top1 == case.factor) as usize;
                outcomes.push(CaseOutcome {
                    trial: t,
                    case: c,
                    factor: case.factor,
                    direction: case.direction,
                    method,
                    top1,
                    hit: top1 == case.factor,
                    top3_hit: iv.rank[case.factor] <= 3,
                    impacts: iv,
                });
            }
            accuracy.push(hits as f64 / cases.len() as f64);
        }
        trials.push(TrialSummary {
            trial: t,
            split_seed,
            model_seed,
            explain_seed,
            test_rsmae,
            accuracy,
        });
    }

    let mut summaries = Vec::new();
    for &method in &config.methods {
        for (c, case) in cases.iter().enumerate() {
            let runs: Vec<&CaseOutcome> = outcomes.iter().filter(|o| o.method == method && o.case == c).collect();
            let per_factor: Vec<(f64, f64)> = (0..factors.len())
                .map(|j| mean_std(&runs.iter().map(|o| o.impacts.normalized[j]).collect::<Vec<_>>()))
                .collect();
            summaries.push(CaseSummary {
                case: c,
                factor: case.factor,
                direction: case.direction,
                symbols: settings_symbols(factors, &case.settings).0,
                method,
                hit_rate: runs.iter().filter(|o| o.hit).count() as f64 / runs.len() as f64,
                mean_normalized: per_factor.iter().map(|p| p.0).collect(),
                std_normalized: per_factor.iter().map(|p| p.1).collect(),
            });
        }
    }
    Ok(CauseReport {
        schema: REPORT_SCHEMA,
        factors: factors.iter().map(|f| f.name.clone()).collect(),
        config: config.clone(),
        trials,
        cases: summaries,
        accuracy: attribution_accuracy(&outcomes, factors.len())?,
        outcomes,
        run: serde_json::Value::Null,
    })
}

impl CauseReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(json)?;
        let schema = value.get("schema").and_then(|v| v.as_u64()).unwrap_or(0);
        if schema != REPORT_SCHEMA {
            return Err(Error::Schema {
                found: schema,
                expected: REPORT_SCHEMA,
            });
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn method_accuracy(&self, method: Method) -> Option<&MethodAccuracy> {
        self.accuracy.iter().find(|a| a.method == method)
    }

    /// One row per trial × case × method × factor.
    pub fn write_csv<W: Write>(&self, writer: W, factors: &[FactorSpec]) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record([
            "trial",
            "case",
            "perturbed_factor",
            "direction",
            "symbols",
            "method",
            "factor",
            "raw_impact",
            "normalized_impact",
            "rank",
            "top1",
            "hit",
        ])?;
        let cases = perturbation_cases(factors, &self.config.directions);
        for o in &self.outcomes {
            let symbols = cases
                .get(o.case)
                .map(|c| settings_symbols(factors, &c.settings).0)
                .unwrap_or_default();
            for j in 0..self.factors.len() {
                w.write_record([
                    o.trial.to_string(),
                    o.case.to_string(),
                    self.factors[o.factor].clone(),
                    o.direction.to_string(),
                    symbols.clone(),
                    o.method.to_string(),
                    self.factors[j].clone(),
                    o.impacts.raw[j].to_string(),
                    o.impacts.normalized[j].to_string(),
                    o.impacts.rank[j].to_string(),
                    self.factors[o.top1].clone(),
                    o.hit.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Normalized impacts of one test instance under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceImpact {
    pub row: usize,
    pub combination_id: u32,
    pub cycle_index: u32,
    pub symbols: String,
    pub ascii: String,
    pub impacts: ImpactVector,
}

/// Impact vectors for every test instance and method, ordered by
/// combination, cycle and method. Identical settings rows are attributed
/// once and share the result.
pub fn compare_over_test_set<P: Predictor + ?Sized>(
    predictor: &P,
    methods: &[Method],
    test: &Dataset,
    background: ArrayView2<'_, f64>,
    config: &ExplainerConfig,
    seed: u64,
) -> Result<Vec<InstanceImpact>> {
    if test.n_rows() == 0 {
        return Err(Error::Empty("test set"));
    }
    let factors = test.factors();
    let grids = config.grids(factors)?;
    let points = test.points();
    let mut unique: Vec<usize> = Vec::new();
    let mut slot_of: HashMap<Vec<u64>, usize> = HashMap::new();
    let slots: Vec<usize> = points
        .outer_iter()
        .enumerate()
        .map(|(r, row)| {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            *slot_of.entry(key).or_insert_with(|| {
                unique.push(r);
                unique.len() - 1
            })
        })
        .collect();
    let rows = points.select(Axis(0), &unique);

    let mut per_method = Vec::new();
    for &method in methods {
        let raw: Vec<Vec<f64>> = match method {
            Method::Shap => shap_batch(predictor, rows.view(), background, config.permutations, seed)?
                .into_iter()
                .map(|r| r.phi)
                .collect(),
            Method::Ice => ice_impact_batch(predictor, rows.view(), &grids)?,
        };
        per_method.push((method, raw));
    }

    let design = &test.design;
    let mut order: Vec<usize> = (0..test.n_rows()).collect();
    order.sort_by_key(|&r| (design.combination_id[r], design.cycle_index[r], r));
    let mut out = Vec::new();
    for r in order {
        let (symbols, ascii) = settings_symbols(factors, points.row(r).as_slice().expect("row-major"));
        for (method, raw) in &per_method {
            out.push(InstanceImpact {
                row: r,
                combination_id: design.combination_id[r],
                cycle_index: design.cycle_index[r],
                symbols: symbols.clone(),
                ascii: ascii.clone(),
                impacts: normalize_and_rank(&raw[slots[r]], *method, r)?,
            });
        }
    }
    Ok(out)
}
