//! Tuning of the weight surface so that a forest trained on simulated data
//! reproduces the step-plot effect sizes in [`WEIGHT_EFFECT_TARGETS`].
//!
//! Each target is linear in the stepped factor's main coefficient and its
//! interaction with the held factor, so a pair of targets sharing both
//! factors pins those two coefficients exactly. The search runs over a grid
//! of surface deltas around each target pair, trains forests on a few
//! simulated datasets per candidate, and keeps the candidate whose worst
//! relative error over surface and forest deltas is smallest.

use ndarray::{aview1, Array2};
use serde::{Deserialize, Serialize};

use crate::doe::{build_ccd, replicate, stratified_split, CcdMode, FactorSpec, Response};
use crate::error::{Error, Result};
use crate::models::{fit_forest, ForestParams};
use crate::predictor::Predictor;
use crate::seed::{self, PipelineSeeds};
use crate::surrogate::{EffectTarget, Surrogate, SurrogateParams, EFFECT_TOLERANCE, WEIGHT_EFFECT_TARGETS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub reps: usize,
    pub fractions: [f64; 3],
    pub forest: ForestParams,
    /// Datasets per candidate. The first is the pipeline dataset for `seed`;
    /// forest deltas are also averaged over all of them.
    pub datasets: usize,
    /// Passes over the two target pairs.
    pub sweeps: usize,
    /// Grid points per target along the relative band.
    pub grid: usize,
    /// Surface deltas range over `target * (1 ± band)`.
    pub band: f64,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            reps: 20,
            fractions: [0.6, 0.1, 0.3],
            forest: ForestParams::default(),
            datasets: 4,
            sweeps: 2,
            grid: 9,
            band: 0.3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub surface_deltas: Vec<f64>,
    /// Deltas of the forest trained on the pipeline dataset.
    pub pipeline_deltas: Vec<f64>,
    /// Mean deltas over all calibration datasets.
    pub forest_deltas: Vec<f64>,
    /// Largest relative error over surface, pipeline and mean forest deltas.
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub config: CalibrationConfig,
    pub initial: Candidate,
    pub best: Candidate,
    pub evaluated: usize,
    pub within_tolerance: bool,
}

fn target_rows(factors: &[FactorSpec]) -> Result<Array2<f64>> {
    let mut rows = Vec::new();
    for t in &WEIGHT_EFFECT_TARGETS {
        let (a, b) = t.rows(factors)?;
        rows.extend(a);
        rows.extend(b);
    }
    Ok(Array2::from_shape_vec((2 * WEIGHT_EFFECT_TARGETS.len(), factors.len()), rows).expect("row count"))
}

/// Deltas of the noiseless weight surface.
pub fn surface_deltas(surrogate: &Surrogate) -> Result<Vec<f64>> {
    let rows = target_rows(surrogate.factors())?;
    let mut out = Vec::new();
    for pair in rows.outer_iter().collect::<Vec<_>>().chunks(2) {
        out.push(surrogate.weight_response(pair[1])? - surrogate.weight_response(pair[0])?);
    }
    Ok(out)
}

/// Deltas of a forest predictor at the target rows.
pub fn predictor_deltas<P: Predictor + ?Sized>(predictor: &P, factors: &[FactorSpec]) -> Result<Vec<f64>> {
    let p = predictor.predict(target_rows(factors)?.view())?;
    Ok(p.as_slice()
        .expect("contiguous")
        .chunks(2)
        .map(|c| c[1] - c[0])
        .collect())
}

/// Seeds of calibration dataset `d`; dataset 0 is the pipeline's own.
pub fn dataset_seeds(seed: u64, d: usize) -> PipelineSeeds {
    if d == 0 {
        PipelineSeeds::new(seed)
    } else {
        PipelineSeeds::new(seed::derive(seed::derive_str(seed, "calibration"), d as u64))
    }
}

/// Forest deltas for each of `config.datasets` simulated datasets.
pub fn forest_deltas(surrogate: &Surrogate, config: &CalibrationConfig) -> Result<Vec<Vec<f64>>> {
    let factors = surrogate.factors();
    let base = build_ccd(factors, CcdMode::Table3)?;
    (0..config.datasets)
        .map(|d| {
            let s = dataset_seeds(config.seed, d);
            let design = replicate(&base, config.reps, s.design)?;
            let data = surrogate.simulate(&design, s.simulate)?;
            let split = stratified_split(&data, config.fractions, s.split)?;
            let forest = fit_forest(
                split.train.points(),
                split.train.response(Response::Weight)?,
                &ForestParams {
                    seed: s.forest,
                    ..config.forest
                },
            )?;
            predictor_deltas(&forest, factors)
        })
        .collect()
}

fn mean_deltas(per_dataset: &[Vec<f64>]) -> Vec<f64> {
    (0..WEIGHT_EFFECT_TARGETS.len())
        .map(|i| per_dataset.iter().map(|d| d[i]).sum::<f64>() / per_dataset.len() as f64)
        .collect()
}

/// Set the main coefficient of `t.stepped` and its interaction with `t.held`
/// so that the surface deltas of targets `a` and `b` (sharing both factors)
/// equal `want`.
fn solve_pair(
    params: &mut SurrogateParams,
    factors: &[FactorSpec],
    (a, b): (&EffectTarget, &EffectTarget),
    want: [f64; 2],
) -> Result<()> {
    let delta = |p: &SurrogateParams, t: &EffectTarget| -> Result<f64> {
        let s = Surrogate::new(factors, p.clone())?;
        let (x0, x1) = t.rows(factors)?;
        Ok(s.weight_response(aview1(&x1))? - s.weight_response(aview1(&x0))?)
    };
    let (stepped, held) = (a.stepped, a.held);
    let main0 = params.weight.main.get(stepped).copied().unwrap_or(0.0);
    let inter0 = params.weight.interaction(stepped, held);
    let d0 = [delta(params, a)?, delta(params, b)?];
    let mut probe = params.clone();
    *probe.weight.main.entry(stepped.to_string()).or_default() = main0 + 1.0;
    let dm = [delta(&probe, a)? - d0[0], delta(&probe, b)? - d0[1]];
    let mut probe = params.clone();
    probe.weight.set_interaction(stepped, held, inter0 + 1.0);
    let di = [delta(&probe, a)? - d0[0], delta(&probe, b)? - d0[1]];
    let det = dm[0] * di[1] - dm[1] * di[0];
    if det.abs() < 1e-12 {
        return Err(Error::Degenerate(format!(
            "targets for `{stepped}` do not separate main and interaction"
        )));
    }
    let r = [want[0] - d0[0], want[1] - d0[1]];
    let x_main = (r[0] * di[1] - r[1] * di[0]) / det;
    let x_inter = (dm[0] * r[1] - dm[1] * r[0]) / det;
    params.weight.main.insert(stepped.to_string(), main0 + x_main);
    params.weight.set_interaction(stepped, held, inter0 + x_inter);
    Ok(())
}

/// Largest absolute relative error over any of the delta sets.
pub fn worst_error(sets: &[&[f64]]) -> f64 {
    sets.iter()
        .flat_map(|set| {
            WEIGHT_EFFECT_TARGETS
                .iter()
                .zip(set.iter())
                .map(|(t, v)| t.relative_error(*v).abs())
        })
        .fold(0.0, f64::max)
}

fn evaluate(factors: &[FactorSpec], params: &SurrogateParams, config: &CalibrationConfig) -> Result<Candidate> {
    let surrogate = Surrogate::new(factors, params.clone())?;
    let surface = surface_deltas(&surrogate)?;
    let per_dataset = forest_deltas(&surrogate, config)?;
    let mean = mean_deltas(&per_dataset);
    let pipeline = per_dataset.into_iter().next().expect("at least one dataset");
    Ok(Candidate {
        worst: worst_error(&[&surface, &pipeline, &mean]),
        surface_deltas: surface,
        pipeline_deltas: pipeline,
        forest_deltas: mean,
    })
}

/// Calibrate the main and interaction coefficients behind the weight
/// targets. Other coefficients are left as given.
pub fn calibrate(
    factors: &[FactorSpec],
    params: &SurrogateParams,
    config: &CalibrationConfig,
) -> Result<(SurrogateParams, CalibrationReport)> {
    if config.sweeps == 0 || config.datasets == 0 || config.grid == 0 {
        return Err(Error::InvalidParameter(
            "calibration needs sweeps, datasets and grid points".into(),
        ));
    }
    let targets = &WEIGHT_EFFECT_TARGETS;
    let steps: Vec<f64> = if config.grid == 1 {
        vec![1.0]
    } else {
        (0..config.grid)
            .map(|i| 1.0 - config.band + 2.0 * config.band * i as f64 / (config.grid - 1) as f64)
            .collect()
    };
    let initial = evaluate(factors, params, config)?;
    let mut best = (initial.clone(), params.clone());
    let mut evaluated = 1;
    for _ in 0..config.sweeps {
        for (a, b) in [(0, 1), (2, 3)] {
            let start = best.1.clone();
            for &fa in &steps {
                for &fb in &steps {
                    let mut candidate = start.clone();
                    solve_pair(
                        &mut candidate,
                        factors,
                        (&targets[a], &targets[b]),
                        [targets[a].delta * fa, targets[b].delta * fb],
                    )?;
                    let c = evaluate(factors, &candidate, config)?;
                    evaluated += 1;
                    if c.worst < best.0.worst {
                        best = (c, candidate);
                    }
                }
            }
        }
    }
    let (best, params) = best;
    Ok((
        params,
        CalibrationReport {
            config: config.clone(),
            initial,
            within_tolerance: best.worst <= EFFECT_TOLERANCE,
            best,
            evaluated,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::doe::table3_factors;

    #[test]
    fn pair_solve_hits_requested_surface_deltas() {
        let factors = table3_factors();
        let mut p = SurrogateParams::default_params();
        let t = &WEIGHT_EFFECT_TARGETS;
        solve_pair(&mut p, &factors, (&t[0], &t[1]), [0.11, 0.06]).unwrap();
        solve_pair(&mut p, &factors, (&t[2], &t[3]), [0.5, 0.2]).unwrap();
        let d = surface_deltas(&Surrogate::new(&factors, p).unwrap()).unwrap();
        for (got, want) in d.iter().zip([0.11, 0.06, 0.5, 0.2]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn forest_deltas_track_the_surface() {
        let factors = table3_factors();
        let s = Surrogate::new(&factors, SurrogateParams::default_params()).unwrap();
        let config = CalibrationConfig {
            datasets: 1,
            forest: ForestParams {
                n_trees: 30,
                ..Default::default()
            },
            ..Default::default()
        };
        let f = &forest_deltas(&s, &config).unwrap()[0];
        let d = surface_deltas(&s).unwrap();
        for (a, b) in f.iter().zip(&d) {
            assert!(a.signum() == b.signum() && (a - b).abs() < 0.15);
        }
    }
}
