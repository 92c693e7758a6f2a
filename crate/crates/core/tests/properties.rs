use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView2};
use proptest::prelude::*;
use xmold_core::cause::normalize_and_rank;
use xmold_core::doe::{build_ccd, replicate, stratified_split, table3_factors, CcdMode};
use xmold_core::explain::{h_pairwise, ice_curves, pd_1d, shap_exact, shap_permutation, Grid};
use xmold_core::models::{fit_forest, ForestParams};
use xmold_core::predictor::FnPredictor;
use xmold_core::{Method, Predictor, Response, Surrogate, SurrogateParams};

fn uniform(n: usize, d: usize, s: u64) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |(i, j)| {
        let u = xmold_core::seed::derive(xmold_core::seed::derive(s, i as u64), j as u64);
        (u >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    })
}

fn dataset(reps: usize, seed: u64) -> xmold_core::Dataset {
    let factors = table3_factors();
    let design = replicate(&build_ccd(&factors, CcdMode::Table3).unwrap(), reps, seed).unwrap();
    Surrogate::new(&factors, SurrogateParams::default_params())
        .unwrap()
        .simulate(&design, seed)
        .unwrap()
}

/// A predictor that answers only from a table of known rows, so explainers
/// that bypass the predictor interface cannot pass.
struct Lookup {
    table: HashMap<Vec<u64>, f64>,
}

impl Lookup {
    fn new(rows: ArrayView2<'_, f64>, f: impl Fn(&[f64]) -> f64) -> Self {
        let table = rows
            .outer_iter()
            .map(|r| (r.iter().map(|v| v.to_bits()).collect(), f(r.as_slice().unwrap())))
            .collect();
        Lookup { table }
    }
}

impl Predictor for Lookup {
    fn n_features(&self) -> usize {
        3
    }

    fn predict(&self, rows: ArrayView2<'_, f64>) -> xmold_core::Result<Array1<f64>> {
        Ok(rows
            .outer_iter()
            .map(|r| self.table[&r.iter().map(|v| v.to_bits()).collect::<Vec<_>>()])
            .collect())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_partitions_the_dataset(seed in any::<u64>(), reps in 3usize..12) {
        let data = dataset(reps, seed);
        let split = stratified_split(&data, [0.6, 0.1, 0.3], seed).unwrap();
        let key = |d: &xmold_core::Dataset, i: usize| (d.design.combination_id[i], d.design.cycle_index[i]);
        let mut seen = std::collections::HashSet::new();
        for part in [&split.train, &split.val, &split.test] {
            for i in 0..part.n_rows() {
                prop_assert!(seen.insert(key(part, i)));
            }
        }
        let all: std::collections::HashSet<_> = (0..data.n_rows()).map(|i| key(&data, i)).collect();
        prop_assert_eq!(seen, all);
    }

    #[test]
    fn simulation_is_repeatable(seed in any::<u64>()) {
        let a = dataset(2, seed);
        let b = dataset(2, seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn surface_without_interactions_is_additive(j in 0usize..6, k in 0usize..6, lo in -1.0f64..0.0, hi in 0.0f64..1.0) {
        prop_assume!(j != k);
        let factors = table3_factors();
        let mut params = SurrogateParams::default_params();
        params.weight.interactions.clear();
        let s = Surrogate::new(&factors, params).unwrap();
        let at = |zj: f64, zk: f64| {
            let mut row: Vec<f64> = factors.iter().map(|f| f.centre()).collect();
            row[j] = factors[j].uncoded(zj);
            row[k] = factors[k].uncoded(zk);
            s.response(Response::Weight, ndarray::aview1(&row)).unwrap()
        };
        let cross = at(hi, hi) - at(hi, lo) - at(lo, hi) + at(lo, lo);
        prop_assert!(cross.abs() < 1e-9, "{cross}");
    }

    #[test]
    fn forest_is_tree_mean_and_bounded(seed in any::<u64>()) {
        let x = uniform(60, 3, seed);
        let y: Vec<f64> = x.outer_iter().map(|r| r[0] * 2.0 + r[1] * r[2]).collect();
        let params = ForestParams { n_trees: 15, seed, ..ForestParams::default() };
        let forest = fit_forest(x.view(), &y, &params).unwrap();
        let probe = uniform(100, 3, seed ^ 1);
        let pred = forest.predict(probe.view()).unwrap();
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        for (i, row) in probe.outer_iter().enumerate() {
            let trees = forest.tree_predictions(row);
            let mean = trees.iter().sum::<f64>() / trees.len() as f64;
            prop_assert!((mean - pred[i]).abs() < 1e-12);
            prop_assert!(pred[i] >= lo - 1e-12 && pred[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn shapley_symmetry_and_dummy(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        // Features 0 and 1 are exchangeable, feature 3 is ignored.
        let f = FnPredictor::new(4, move |x: &[f64]| a * (x[0] + x[1]) + b * x[0] * x[1] + x[2].powi(2));
        let background = uniform(12, 4, seed);
        let mut x = uniform(1, 4, seed ^ 7).row(0).to_owned();
        x[1] = x[0];
        let exact = shap_exact(&f, x.view(), background.view()).unwrap();
        let full = shap_permutation(&f, x.view(), background.view(), 24, seed).unwrap();
        for r in [&exact, &full] {
            prop_assert!(r.phi[3].abs() < 1e-9);
            prop_assert!(r.local_accuracy_gap() < 1e-9);
        }
        // Symmetry needs an instance and background exchangeable in 0 and 1.
        let mut sym = background.clone();
        for mut row in sym.outer_iter_mut() {
            row[1] = row[0];
        }
        let e = shap_exact(&f, x.view(), sym.view()).unwrap();
        prop_assert!((e.phi[0] - e.phi[1]).abs() < 1e-9);
    }

    #[test]
    fn h_is_non_negative_and_vanishes_for_additive(seed in any::<u64>(), c in -2.0f64..2.0) {
        let sample = uniform(30, 3, seed);
        let additive = FnPredictor::new(3, move |x: &[f64]| c * x[0] + x[1].powi(3) + (2.0 * x[2]).cos());
        let mixed = FnPredictor::new(3, move |x: &[f64]| c * x[0] * x[1] + x[2]);
        for (j, k) in [(0, 1), (0, 2), (1, 2)] {
            prop_assert!(h_pairwise(&additive, sample.view(), j, k).unwrap() < 1e-6);
            prop_assert!(h_pairwise(&mixed, sample.view(), j, k).unwrap() >= 0.0);
        }
    }

    #[test]
    fn ice_mean_is_pd(seed in any::<u64>(), j in 0usize..6) {
        let factors = table3_factors();
        let data = dataset(2, seed);
        let f = FnPredictor::new(6, |x: &[f64]| x[3] * x[5] / 100.0 + x[2].sqrt() - x[1]);
        let grid = Grid::levels(&factors[j]);
        let sample = data.points().slice(ndarray::s![..40, ..]).to_owned();
        let ice = ice_curves(&f, sample.view(), j, &grid).unwrap();
        let pd = pd_1d(&f, sample.view(), j, &grid).unwrap();
        for g in 0..grid.len() {
            let mean = ice.iter().map(|c| c.values[g]).sum::<f64>() / ice.len() as f64;
            prop_assert!((mean - pd.values[g]).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_ignores_positive_scaling(raw in prop::collection::vec(0.0f64..10.0, 6), scale in 0.01f64..100.0) {
        let a = normalize_and_rank(&raw, Method::Shap, 0).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|v| v * scale).collect();
        let b = normalize_and_rank(&scaled, Method::Shap, 0).unwrap();
        prop_assert_eq!(&a.rank, &b.rank);
        prop_assert!(a.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn explainers_work_through_the_predictor_interface_only() {
    let levels = [-1.0, 0.0, 1.0];
    let mut rows = Vec::new();
    for a in levels {
        for b in levels {
            for c in levels {
                rows.extend([a, b, c]);
            }
        }
    }
    let grid_rows = Array2::from_shape_vec((27, 3), rows).unwrap();
    let f = |x: &[f64]| x[0] * x[1] + 2.0 * x[2];
    let lookup = Lookup::new(grid_rows.view(), f);
    let direct = FnPredictor::new(3, f);
    let grid = Grid::new(levels.to_vec()).unwrap();
    let x = grid_rows.row(5);

    let a = shap_exact(&lookup, x, grid_rows.view()).unwrap();
    let b = shap_exact(&direct, x, grid_rows.view()).unwrap();
    assert_eq!(a.phi, b.phi);
    let a = shap_permutation(&lookup, x, grid_rows.view(), 6, 1).unwrap();
    assert!(a.local_accuracy_gap() < 1e-12);
    for j in 0..3 {
        assert_eq!(
            pd_1d(&lookup, grid_rows.view(), j, &grid).unwrap().values,
            pd_1d(&direct, grid_rows.view(), j, &grid).unwrap().values
        );
        assert_eq!(ice_curves(&lookup, grid_rows.view(), j, &grid).unwrap().len(), 27);
    }
    let h = h_pairwise(&lookup, grid_rows.view(), 0, 1).unwrap();
    assert!((h - 1.0).abs() < 1e-12, "{h}");
    assert!(h_pairwise(&lookup, grid_rows.view(), 0, 2).unwrap() < 1e-12);
}
