use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{check_factor, check_sample, Grid};
use crate::error::{Error, Result};
use crate::predictor::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IceCurveSet {
    pub instance: usize,
    pub factor: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl IceCurveSet {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation of the curve around its mean.
    pub fn sigma(&self) -> f64 {
        let mu = self.mean();
        (self.values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / self.values.len() as f64).sqrt()
    }
}

/// ICE curve of factor `j` for every row of `instances`; instance ids are row
/// positions.
pub fn ice_curves<P: Predictor + ?Sized>(
    predictor: &P,
    instances: ArrayView2<'_, f64>,
    j: usize,
    grid: &Grid,
) -> Result<Vec<IceCurveSet>> {
    check_sample(instances, predictor.n_features(), "ICE instances")?;
    check_factor(j, instances.ncols())?;
    let c = grid.len();
    let mut rows = Array2::zeros((instances.nrows() * c, instances.ncols()));
    for (i, inst) in instances.outer_iter().enumerate() {
        for (g, &v) in grid.values().iter().enumerate() {
            let mut r = rows.row_mut(i * c + g);
            r.assign(&inst);
            r[j] = v;
        }
    }
    let pred = predictor.predict(rows.view())?;
    Ok(pred
        .as_slice()
        .expect("contiguous")
        .chunks(c)
        .enumerate()
        .map(|(i, v)| IceCurveSet {
            instance: i,
            factor: j,
            grid: grid.values().to_vec(),
            values: v.to_vec(),
        })
        .collect())
}

/// ICE spread of every factor for one instance: the population standard
/// deviation of its curve over that factor's grid.
pub fn ice_impact<P: Predictor + ?Sized>(
    predictor: &P,
    instance: ArrayView1<'_, f64>,
    grids: &[Grid],
) -> Result<Vec<f64>> {
    let rows = instance.insert_axis(ndarray::Axis(0));
    Ok(ice_impact_batch(predictor, rows, grids)?.remove(0))
}

/// [`ice_impact`] for every row of `instances`, evaluated as one batch.
pub fn ice_impact_batch<P: Predictor + ?Sized>(
    predictor: &P,
    instances: ArrayView2<'_, f64>,
    grids: &[Grid],
) -> Result<Vec<Vec<f64>>> {
    check_sample(instances, predictor.n_features(), "ICE instances")?;
    let d = instances.ncols();
    if grids.len() != d {
        return Err(Error::InvalidParameter(format!(
            "expected {d} grids, got {}",
            grids.len()
        )));
    }
    let per_instance: usize = grids.iter().map(Grid::len).sum();
    let mut rows = Array2::zeros((instances.nrows() * per_instance, d));
    let mut r = 0;
    for inst in instances.outer_iter() {
        for (j, grid) in grids.iter().enumerate() {
            for &v in grid.values() {
                let mut row = rows.row_mut(r);
                row.assign(&inst);
                row[j] = v;
                r += 1;
            }
        }
    }
    let pred = predictor.predict(rows.view())?;
    let pred = pred.as_slice().expect("contiguous");
    Ok(pred
        .chunks(per_instance)
        .map(|chunk| {
            let mut offset = 0;
            grids
                .iter()
                .map(|g| {
                    let curve = &chunk[offset..offset + g.len()];
                    offset += g.len();
                    let mu = curve.iter().sum::<f64>() / curve.len() as f64;
                    (curve.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / curve.len() as f64).sqrt()
                })
                .collect()
        })
        .collect())
}
