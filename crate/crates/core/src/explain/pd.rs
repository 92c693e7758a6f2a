use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_factor, check_sample, forced_means, Grid};
use crate::error::{Error, Result};
use crate::predictor::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdCurve {
    pub factor: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub n_samples: usize,
}

impl PdCurve {
    /// Largest minus smallest PD value.
    pub fn peak_to_peak(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        hi - lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdSurface {
    pub factors: (usize, usize),
    pub grids: (Vec<f64>, Vec<f64>),
    /// `values[[a, b]]` is the PD at `(grids.0[a], grids.1[b])`.
    pub values: Array2<f64>,
    pub n_samples: usize,
}

/// One-way partial dependence of factor `j` over `grid`, averaging over the
/// rows of `sample`.
pub fn pd_1d<P: Predictor + ?Sized>(
    predictor: &P,
    sample: ArrayView2<'_, f64>,
    j: usize,
    grid: &Grid,
) -> Result<PdCurve> {
    check_sample(sample, predictor.n_features(), "partial dependence sample")?;
    check_factor(j, sample.ncols())?;
    let settings: Vec<Vec<f64>> = grid.values().iter().map(|&c| vec![c]).collect();
    Ok(PdCurve {
        factor: j,
        grid: grid.values().to_vec(),
        values: forced_means(predictor, sample, &[j], &settings)?,
        n_samples: sample.nrows(),
    })
}

/// Two-way partial dependence of `(j, k)` over the product of two grids.
pub fn pd_2d<P: Predictor + ?Sized>(
    predictor: &P,
    sample: ArrayView2<'_, f64>,
    (j, k): (usize, usize),
    (grid_j, grid_k): (&Grid, &Grid),
) -> Result<PdSurface> {
    check_sample(sample, predictor.n_features(), "partial dependence sample")?;
    check_factor(j, sample.ncols())?;
    check_factor(k, sample.ncols())?;
    if j == k {
        return Err(Error::InvalidParameter("two-way PD needs two distinct factors".into()));
    }
    let settings: Vec<Vec<f64>> = grid_j
        .values()
        .iter()
        .flat_map(|&a| grid_k.values().iter().map(move |&b| vec![a, b]))
        .collect();
    let means = forced_means(predictor, sample, &[j, k], &settings)?;
    Ok(PdSurface {
        factors: (j, k),
        grids: (grid_j.values().to_vec(), grid_k.values().to_vec()),
        values: Array2::from_shape_vec((grid_j.len(), grid_k.len()), means).expect("grid product"),
        n_samples: sample.nrows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::FnPredictor;
    use crate::seed;
    use ndarray::Array2;
    use rand::Rng;

    fn sample(n: usize, d: usize, s: u64) -> Array2<f64> {
        let mut rng = seed::rng(s);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    fn grid5() -> Grid {
        Grid::new(vec![-1.0, -0.5, 0.0, 0.5, 1.0]).unwrap()
    }

    #[test]
    fn ignored_factor_gives_flat_curve() {
        let f = FnPredictor::new(3, |x: &[f64]| x[0] * x[1]);
        let c = pd_1d(&f, sample(40, 3, 1).view(), 2, &grid5()).unwrap();
        assert!(c.values.iter().all(|v| *v == c.values[0]));
        assert_eq!(c.peak_to_peak(), 0.0);
    }

    #[test]
    fn identity_curve_equals_grid() {
        let f = FnPredictor::new(3, |x: &[f64]| x[1]);
        let c = pd_1d(&f, sample(17, 3, 2).view(), 1, &grid5()).unwrap();
        for (v, g) in c.values.iter().zip(&c.grid) {
            assert!((v - g).abs() < 1e-15);
        }
    }

    fn centred(values: impl Iterator<Item = f64> + Clone) -> Vec<f64> {
        let v: Vec<f64> = values.collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| x - m).collect()
    }

    #[test]
    fn additive_surface_is_sum_of_curves() {
        let f = FnPredictor::new(4, |x: &[f64]| 2.0 * x[0] + x[1].powi(3) - x[2] + 0.5 * x[3]);
        let s = sample(30, 4, 3);
        let g = grid5();
        let surf = pd_2d(&f, s.view(), (0, 1), (&g, &g)).unwrap();
        let a = pd_1d(&f, s.view(), 0, &g).unwrap();
        let b = pd_1d(&f, s.view(), 1, &g).unwrap();
        let lhs = centred(surf.values.iter().copied());
        let rhs = centred(
            (0..5)
                .flat_map(|i| (0..5).map(move |k| (i, k)))
                .map(|(i, k)| a.values[i] + b.values[k]),
        );
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-9);
        }
    }

    #[test]
    fn product_surface_is_centred_product() {
        let f = FnPredictor::new(3, |x: &[f64]| x[0] * x[2]);
        let g = grid5();
        let surf = pd_2d(&f, sample(12, 3, 4).view(), (0, 2), (&g, &g)).unwrap();
        assert_eq!(surf.values.dim(), (5, 5));
        let lhs = centred(surf.values.iter().copied());
        let rhs = centred(g.values().iter().flat_map(|a| g.values().iter().map(move |b| a * b)));
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let f = FnPredictor::new(2, |x: &[f64]| x[0]);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(matches!(pd_1d(&f, empty.view(), 0, &grid5()), Err(Error::Empty(_))));
        assert!(pd_1d(&f, sample(3, 2, 0).view(), 2, &grid5()).is_err());
        assert!(pd_2d(&f, sample(3, 2, 0).view(), (1, 1), (&grid5(), &grid5())).is_err());
    }
}
