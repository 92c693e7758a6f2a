use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_factor, check_sample, forced_means};
use crate::error::{Error, Result};
use crate::predictor::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairH {
    pub j: usize,
    pub k: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HReport {
    pub pairs: Vec<PairH>,
    /// Total interaction strength per factor.
    pub total: Vec<f64>,
    pub n_samples: usize,
}

impl HReport {
    /// Factor indices ordered by decreasing total H; ties keep factor order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.total.len()).collect();
        idx.sort_by(|&a, &b| self.total[b].total_cmp(&self.total[a]).then(a.cmp(&b)));
        idx
    }
}

/// PD over `sample` with columns `cols` forced to each row's own values in
/// `sample`. Repeated settings are evaluated once.
fn pd_at_rows<P: Predictor + ?Sized>(predictor: &P, sample: ArrayView2<'_, f64>, cols: &[usize]) -> Result<Vec<f64>> {
    let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    let mut settings = Vec::new();
    let slot: Vec<usize> = sample
        .outer_iter()
        .map(|row| {
            let values: Vec<f64> = cols.iter().map(|&c| row[c]).collect();
            let key = values.iter().map(|v| v.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                settings.push(values);
                settings.len() - 1
            })
        })
        .collect();
    let means = forced_means(predictor, sample, cols, &settings)?;
    Ok(slot.into_iter().map(|s| means[s]).collect())
}

fn centre(mut v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
    v
}

/// `sqrt(Σ (a - b - c)² / Σ a²)` on centred inputs, or a degeneracy error
/// when `a` is constant.
fn ratio(a: &[f64], b: &[f64], c: &[f64], what: &str) -> Result<f64> {
    let den: f64 = a.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Err(Error::Degenerate(format!(
            "{what}: partial dependence is constant over the sample"
        )));
    }
    let num: f64 = a.iter().zip(b).zip(c).map(|((a, b), c)| (a - b - c).powi(2)).sum();
    Ok((num / den).max(0.0).sqrt())
}

/// Pairwise interaction strength `H_jk`, evaluated at the sample points with
/// every PD term mean-centred over the sample.
pub fn h_pairwise<P: Predictor + ?Sized>(
    predictor: &P,
    sample: ArrayView2<'_, f64>,
    j: usize,
    k: usize,
) -> Result<f64> {
    check_sample(sample, predictor.n_features(), "H-statistic sample")?;
    check_factor(j, sample.ncols())?;
    check_factor(k, sample.ncols())?;
    if sample.nrows() < 2 {
        return Err(Error::InvalidParameter(
            "H-statistic needs at least two sample rows".into(),
        ));
    }
    if j == k {
        return Err(Error::InvalidParameter("H_jk needs two distinct factors".into()));
    }
    let pjk = centre(pd_at_rows(predictor, sample, &[j, k])?);
    let pj = centre(pd_at_rows(predictor, sample, &[j])?);
    let pk = centre(pd_at_rows(predictor, sample, &[k])?);
    ratio(&pjk, &pj, &pk, &format!("H_{j}{k}"))
}

/// Total interaction strength `H_j` of factor `j` with all other factors.
pub fn h_total<P: Predictor + ?Sized>(predictor: &P, sample: ArrayView2<'_, f64>, j: usize) -> Result<f64> {
    check_sample(sample, predictor.n_features(), "H-statistic sample")?;
    check_factor(j, sample.ncols())?;
    if sample.nrows() < 2 {
        return Err(Error::InvalidParameter(
            "H-statistic needs at least two sample rows".into(),
        ));
    }
    let rest: Vec<usize> = (0..sample.ncols()).filter(|&c| c != j).collect();
    let f = centre(predictor.predict(sample)?.to_vec());
    let pj = centre(pd_at_rows(predictor, sample, &[j])?);
    let p_rest = centre(pd_at_rows(predictor, sample, &rest)?);
    ratio(&f, &pj, &p_rest, &format!("H_{j}"))
}

/// Every pairwise and total H-statistic over `sample`.
pub fn h_report<P: Predictor + ?Sized>(predictor: &P, sample: ArrayView2<'_, f64>) -> Result<HReport> {
    let d = sample.ncols();
    let mut pairs = Vec::new();
    for j in 0..d {
        for k in j + 1..d {
            pairs.push(PairH {
                j,
                k,
                h: h_pairwise(predictor, sample, j, k)?,
            });
        }
    }
    let total = (0..d).map(|j| h_total(predictor, sample, j)).collect::<Result<_>>()?;
    Ok(HReport {
        pairs,
        total,
        n_samples: sample.nrows(),
    })
}
