//! Model-agnostic explainers. Everything here sees a model only through
//! [`Predictor`](crate::predictor::Predictor): partial dependence, ICE curves
//! and their spread, Friedman's H-statistics, and Shapley attributions by
//! permutation sampling or exact coalition enumeration.

mod grid;
mod hstat;
mod ice;
mod pd;
mod shap;

pub use grid::{default_grids, Grid};
pub use hstat::{h_pairwise, h_report, h_total, HReport, PairH};
pub use ice::{ice_curves, ice_impact, ice_impact_batch, IceCurveSet};
pub use pd::{pd_1d, pd_2d, PdCurve, PdSurface};
pub use shap::{shap_batch, shap_exact, shap_permutation, ShapResult, EXACT_MAX_FEATURES};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::predictor::Predictor;

fn check_factor(j: usize, d: usize) -> Result<()> {
    if j >= d {
        return Err(Error::FactorIndex { index: j, count: d });
    }
    Ok(())
}

fn check_sample(sample: ArrayView2<'_, f64>, n_features: usize, what: &'static str) -> Result<()> {
    if sample.nrows() == 0 {
        return Err(Error::Empty(what));
    }
    if sample.ncols() != n_features {
        return Err(Error::FeatureCount {
            expected: n_features,
            got: sample.ncols(),
        });
    }
    Ok(())
}

/// Mean prediction over `sample` for each assignment in `settings`, where
/// assignment `a` overwrites columns `cols` with `settings[a]`. Evaluated as
/// one batch.
fn forced_means<P: Predictor + ?Sized>(
    predictor: &P,
    sample: ArrayView2<'_, f64>,
    cols: &[usize],
    settings: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let n = sample.nrows();
    let mut rows = Array2::zeros((n * settings.len(), sample.ncols()));
    for (a, values) in settings.iter().enumerate() {
        let mut block = rows.slice_mut(ndarray::s![a * n..(a + 1) * n, ..]);
        block.assign(&sample);
        for (&c, &v) in cols.iter().zip(values) {
            block.column_mut(c).fill(v);
        }
    }
    let pred = predictor.predict(rows.view())?;
    Ok(pred
        .as_slice()
        .expect("contiguous")
        .chunks(n)
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect())
}
