//! The batch-predict contract every explainer works through.

use ndarray::{Array1, ArrayView2};

use crate::error::{Error, Result};

/// A regression model seen as a black box: a table of rows in, one value per
/// row out. Implementations must be pure and safe for concurrent reads.
pub trait Predictor: Sync {
    fn n_features(&self) -> usize;

    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>>;
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        (**self).predict(rows)
    }
}

/// Checks shared by all model implementations: column count and finiteness.
pub fn check_rows(rows: ArrayView2<'_, f64>, n_features: usize) -> Result<()> {
    if rows.ncols() != n_features {
        return Err(Error::FeatureCount {
            expected: n_features,
            got: rows.ncols(),
        });
    }
    for (row, r) in rows.outer_iter().enumerate() {
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput { row, col });
        }
    }
    Ok(())
}

/// Wraps a row function as a predictor. Handy for synthetic models in tests
/// and for analytic reference functions.
pub struct FnPredictor<F> {
    n_features: usize,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        check_rows(rows, self.n_features)?;
        let mut buf = vec![0.0; self.n_features];
        Ok(rows
            .outer_iter()
            .map(|r| {
                for (b, v) in buf.iter_mut().zip(r.iter()) {
                    *b = *v;
                }
                (self.f)(&buf)
            })
            .collect())
    }
}
