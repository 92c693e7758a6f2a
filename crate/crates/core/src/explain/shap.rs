use std::collections::{BTreeMap, HashMap};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::check_sample;
use crate::error::{Error, Result};
use crate::predictor::Predictor;
use crate::seed;

/// Feature count above which exact enumeration is refused.
pub const EXACT_MAX_FEATURES: usize = 15;
/// Largest batch handed to the predictor in one call.
const MAX_BATCH_ROWS: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapResult {
    pub instance: usize,
    pub phi: Vec<f64>,
    /// Mean prediction over the background.
    pub baseline: f64,
    pub prediction: f64,
    /// Orderings evaluated; zero for exact enumeration over coalitions.
    pub permutations: usize,
    /// True when every ordering (or coalition) was evaluated.
    pub exhaustive: bool,
    pub background_size: usize,
    pub seed: Option<u64>,
}

impl ShapResult {
    pub fn with_instance(mut self, instance: usize) -> Self {
        self.instance = instance;
        self
    }

    /// `|Σφ + baseline - prediction|`.
    pub fn local_accuracy_gap(&self) -> f64 {
        (self.phi.iter().sum::<f64>() + self.baseline - self.prediction).abs()
    }
}

fn check_inputs<P: Predictor + ?Sized>(
    predictor: &P,
    instance: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
) -> Result<()> {
    check_sample(background, predictor.n_features(), "SHAP background")?;
    if instance.len() != predictor.n_features() {
        return Err(Error::FeatureCount {
            expected: predictor.n_features(),
            got: instance.len(),
        });
    }
    Ok(())
}

/// Distinct background rows, first-seen order, with their multiplicities.
fn distinct_rows(background: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<f64>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut keep = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for (i, row) in background.outer_iter().enumerate() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&slot) => counts[slot] += 1.0,
            None => {
                index.insert(key, keep.len());
                keep.push(i);
                counts.push(1.0);
            }
        }
    }
    (background.select(Axis(0), &keep), counts)
}

/// Value of each coalition: mean prediction over the background with the
/// coalition's features set to the instance values. Bit `j` of a mask marks
/// feature `j` as present. Repeated background rows are predicted once.
fn coalition_values<P: Predictor + ?Sized>(
    predictor: &P,
    instance: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
    masks: &[u64],
) -> Result<Vec<f64>> {
    let total = background.nrows() as f64;
    let (background, counts) = distinct_rows(background);
    let n = background.nrows();
    let per_batch = (MAX_BATCH_ROWS / n).max(1);
    let mut out = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(per_batch) {
        let mut rows = Array2::zeros((chunk.len() * n, background.ncols()));
        for (m, &mask) in chunk.iter().enumerate() {
            for (i, w) in background.outer_iter().enumerate() {
                let mut row = rows.row_mut(m * n + i);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = if mask >> j & 1 == 1 { instance[j] } else { w[j] };
                }
            }
        }
        let pred = predictor.predict(rows.view())?;
        out.extend(
            pred.as_slice()
                .expect("contiguous")
                .chunks(n)
                .map(|c| c.iter().zip(&counts).map(|(p, k)| p * k).sum::<f64>() / total),
        );
    }
    Ok(out)
}

fn factorial(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// All orderings of `0..d` in lexicographic order.
fn all_orderings(d: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..d).collect();
    let mut out = vec![current.clone()];
    loop {
        let Some(i) = (1..d).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..d)
            .rev()
            .find(|&j| current[j] > current[i - 1])
            .expect("successor exists");
        current.swap(i - 1, j);
        current[i..].reverse();
        out.push(current.clone());
    }
}

/// `p` orderings: the full set when `p >= d!`, otherwise random orderings
/// each followed by its reverse.
fn orderings(d: usize, p: usize, seed: u64) -> (Vec<Vec<usize>>, bool) {
    if factorial(d).is_some_and(|total| p >= total) {
        return (all_orderings(d), true);
    }
    let mut rng = seed::rng(seed::derive_str(seed, "shap-orderings"));
    let mut out = Vec::with_capacity(p);
    while out.len() < p {
        let mut o: Vec<usize> = (0..d).collect();
        o.shuffle(&mut rng);
        if out.len() + 1 < p {
            out.push(o.iter().rev().copied().collect());
        }
        out.push(o);
    }
    (out, false)
}

/// Permutation estimate of Shapley values for one instance. Absent features
/// take their values from each background row in turn, every row weighted
/// equally. `permutations` counts orderings, drawn in antithetic pairs; when
/// it reaches `d!` every ordering is used once and the result is exact.
pub fn shap_permutation<P: Predictor + ?Sized>(
    predictor: &P,
    instance: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
    permutations: usize,
    seed: u64,
) -> Result<ShapResult> {
    check_inputs(predictor, instance, background)?;
    if permutations == 0 {
        return Err(Error::InvalidParameter("SHAP needs at least one permutation".into()));
    }
    let d = instance.len();
    if d > 63 {
        return Err(Error::DimensionGuard { max: 63, got: d });
    }
    let (orders, exhaustive) = orderings(d, permutations, seed);

    let mut slots: BTreeMap<u64, usize> = BTreeMap::new();
    for o in &orders {
        let mut mask = 0u64;
        slots.insert(0, 0);
        for &j in o {
            mask |= 1 << j;
            slots.insert(mask, 0);
        }
    }
    let masks: Vec<u64> = slots.keys().copied().collect();
    for (i, m) in masks.iter().enumerate() {
        slots.insert(*m, i);
    }
    let values = coalition_values(predictor, instance, background, &masks)?;
    let v = |mask: u64| values[slots[&mask]];

    let mut phi = vec![0.0; d];
    for o in &orders {
        let mut mask = 0u64;
        for &j in o {
            let before = v(mask);
            mask |= 1 << j;
            phi[j] += v(mask) - before;
        }
    }
    phi.iter_mut().for_each(|p| *p /= orders.len() as f64);
    let full = (1u64 << d) - 1;
    Ok(ShapResult {
        instance: 0,
        phi,
        baseline: v(0),
        prediction: v(full),
        permutations: orders.len(),
        exhaustive,
        background_size: background.nrows(),
        seed: Some(seed),
    })
}

/// Exact Shapley values from the weighted sum over all `2^d` coalitions.
pub fn shap_exact<P: Predictor + ?Sized>(
    predictor: &P,
    instance: ArrayView1<'_, f64>,
    background: ArrayView2<'_, f64>,
) -> Result<ShapResult> {
    check_inputs(predictor, instance, background)?;
    let d = instance.len();
    if d > EXACT_MAX_FEATURES {
        return Err(Error::DimensionGuard {
            max: EXACT_MAX_FEATURES,
            got: d,
        });
    }
    let n_coalitions = 1usize << d;
    let masks: Vec<u64> = (0..n_coalitions as u64).collect();
    let values = coalition_values(predictor, instance, background, &masks)?;

    let fact: Vec<f64> = (0..=d)
        .scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    let weight = |s: usize| fact[s] * fact[d - s - 1] / fact[d];
    let mut phi = vec![0.0; d];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << j;
        for s in (0..n_coalitions).filter(|s| s & bit == 0) {
            *p += weight(s.count_ones() as usize) * (values[s | bit] - values[s]);
        }
    }
    Ok(ShapResult {
        instance: 0,
        phi,
        baseline: values[0],
        prediction: values[n_coalitions - 1],
        permutations: 0,
        exhaustive: true,
        background_size: background.nrows(),
        seed: None,
    })
}

/// [`shap_permutation`] for every row of `instances`, in parallel. Row `i`
/// uses seed `derive(seed, i)` and gets instance id `i`.
pub fn shap_batch<P: Predictor + ?Sized>(
    predictor: &P,
    instances: ArrayView2<'_, f64>,
    background: ArrayView2<'_, f64>,
    permutations: usize,
    seed: u64,
) -> Result<Vec<ShapResult>> {
    (0..instances.nrows())
        .into_par_iter()
        .map(|i| {
            shap_permutation(
                predictor,
                instances.index_axis(Axis(0), i),
                background,
                permutations,
                seed::derive(seed, i as u64),
            )
            .map(|r| r.with_instance(i))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::FnPredictor;
    use ndarray::{array, Array1};
    use rand::Rng;

    fn sample(n: usize, d: usize, s: u64) -> Array2<f64> {
        let mut rng = seed::rng(s);
        Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
    }

    fn interacting() -> FnPredictor<impl Fn(&[f64]) -> f64 + Sync> {
        FnPredictor::new(6, |x: &[f64]| {
            x[0] + 2.0 * x[1] * x[2] - x[3].powi(2) + (x[4] * x[5]).sin() + x[0] * x[1] * x[5]
        })
    }

    #[test]
    fn orderings_are_antithetic_or_complete() {
        let (all, exhaustive) = orderings(4, 24, 1);
        assert!(exhaustive);
        assert_eq!(all.len(), 24);
        let mut sorted = all.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 24);
        let (some, exhaustive) = orderings(6, 8, 2);
        assert!(!exhaustive);
        for pair in some.chunks(2) {
            let rev: Vec<usize> = pair[1].iter().rev().copied().collect();
            assert_eq!(pair[0], rev);
        }
        assert_eq!(orderings(6, 5, 3).0.len(), 5);
    }

    #[test]
    fn additive_model_is_exact_for_any_p() {
        let a = [0.5, -1.0, 2.0, 0.0, 3.0, 1.5];
        let f = FnPredictor::new(6, move |x: &[f64]| x.iter().zip(&a).map(|(x, a)| x * a).sum());
        let bg = sample(30, 6, 1);
        let x = array![0.3, -0.2, 0.9, 0.1, -0.7, 0.4];
        let mean: Array1<f64> = bg.mean_axis(Axis(0)).unwrap();
        for p in [1, 2, 7] {
            let r = shap_permutation(&f, x.view(), bg.view(), p, 5).unwrap();
            for j in 0..6 {
                assert!((r.phi[j] - a[j] * (x[j] - mean[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_enumeration_matches_exact() {
        let f = interacting();
        let bg = sample(25, 6, 2);
        for (i, x) in sample(5, 6, 3).outer_iter().enumerate() {
            let perm = shap_permutation(&f, x, bg.view(), 720, i as u64).unwrap();
            let exact = shap_exact(&f, x, bg.view()).unwrap();
            assert!(perm.exhaustive);
            for j in 0..6 {
                assert!((perm.phi[j] - exact.phi[j]).abs() < 1e-9);
            }
            assert!(perm.local_accuracy_gap() < 1e-9);
            assert!(exact.local_accuracy_gap() < 1e-9);
            let fx = f.predict(x.insert_axis(Axis(0))).unwrap()[0];
            assert!((exact.prediction - fx).abs() < 1e-12);
        }
    }

    #[test]
    fn single_player_gets_everything() {
        let f = FnPredictor::new(1, |x: &[f64]| x[0].powi(3));
        let bg = sample(10, 1, 4);
        let r = shap_exact(&f, array![0.8].view(), bg.view()).unwrap();
        let mean = bg.column(0).iter().map(|v| v.powi(3)).sum::<f64>() / 10.0;
        assert!((r.phi[0] - (0.512 - mean)).abs() < 1e-12);
    }

    #[test]
    fn symmetry_and_dummy() {
        let f = FnPredictor::new(3, |x: &[f64]| x[0] + x[1]);
        let bg = array![[0.5, -0.5, 3.0], [-0.5, 0.5, -3.0]];
        let r = shap_exact(&f, array![1.0, 1.0, 7.0].view(), bg.view()).unwrap();
        assert!((r.phi[0] - r.phi[1]).abs() < 1e-12);
        assert!(r.phi[2].abs() < 1e-12);
        let p = shap_permutation(&f, array![1.0, 1.0, 7.0].view(), bg.view(), 4, 1).unwrap();
        assert!(p.phi[2].abs() < 1e-12);
    }

    #[test]
    fn more_permutations_reduce_error() {
        let f = interacting();
        let bg = sample(20, 6, 5);
        let x = array![0.9, -0.8, 0.7, -0.6, 0.5, 0.95];
        let exact = shap_exact(&f, x.view(), bg.view()).unwrap();
        let err = |p: usize, s: u64| {
            let r = shap_permutation(&f, x.view(), bg.view(), p, s).unwrap();
            r.phi.iter().zip(&exact.phi).map(|(a, b)| (a - b).abs()).sum::<f64>() / 6.0
        };
        let median = |p: usize| {
            let mut e: Vec<f64> = (0..20).map(|s| err(p, s)).collect();
            e.sort_by(f64::total_cmp);
            (e[9] + e[10]) / 2.0
        };
        assert!(median(64) < median(8));
    }

    #[test]
    fn batch_is_deterministic_and_ordered() {
        let f = interacting();
        let bg = sample(10, 6, 6);
        let xs = sample(4, 6, 7);
        let a = shap_batch(&f, xs.view(), bg.view(), 16, 9).unwrap();
        assert_eq!(a, shap_batch(&f, xs.view(), bg.view(), 16, 9).unwrap());
        for (i, r) in a.iter().enumerate() {
            assert_eq!(r.instance, i);
            assert_eq!(
                r,
                &shap_permutation(&f, xs.row(i), bg.view(), 16, seed::derive(9, i as u64))
                    .unwrap()
                    .with_instance(i)
            );
        }
    }

    #[test]
    fn errors() {
        let f = interacting();
        let x = Array1::zeros(6);
        assert!(shap_permutation(&f, x.view(), Array2::zeros((0, 6)).view(), 8, 0).is_err());
        assert!(shap_permutation(&f, x.view(), sample(3, 6, 0).view(), 0, 0).is_err());
        let wide = FnPredictor::new(16, |x: &[f64]| x[0]);
        let r = shap_exact(&wide, Array1::zeros(16).view(), Array2::zeros((1, 16)).view());
        assert!(matches!(r, Err(Error::DimensionGuard { max: 15, got: 16 })));
    }
}
