//! Bagged regression trees. Each tree is grown greedily on a bootstrap
//! resample by maximizing the reduction in squared error; the forest predicts
//! the mean of its trees.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predictor::{check_rows, Predictor};
use crate::seed;

const LEAF: i32 = -1;
/// Batch size above which prediction fans out over the thread pool.
const PARALLEL_ROWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Draw a bootstrap resample per tree; without it each tree sees the full
    /// training set.
    #[serde(default = "yes")]
    pub bootstrap: bool,
    pub seed: u64,
}

fn yes() -> bool {
    true
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: None,
            min_leaf: 2,
            bootstrap: true,
            seed: 42,
        }
    }
}

/// Binary regression tree in flat arrays. Node `i` is a leaf when
/// `feature[i] == -1`; otherwise rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<f64>,
}

impl Tree {
    /// A single leaf.
    pub fn constant(value: f64) -> Self {
        Tree {
            feature: vec![LEAF],
            threshold: vec![0.0],
            left: vec![0],
            right: vec![0],
            value: vec![value],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            if t.feature[i] == LEAF {
                0
            } else {
                1 + walk(t, t.left[i] as usize).max(walk(t, t.right[i] as usize))
            }
        }
        walk(self, 0)
    }

    pub fn predict_row(&self, row: ArrayView1<'_, f64>) -> f64 {
        let mut i = 0usize;
        loop {
            let f = self.feature[i];
            if f == LEAF {
                return self.value[i];
            }
            i = if row[f as usize] <= self.threshold[i] {
                self.left[i] as usize
            } else {
                self.right[i] as usize
            };
        }
    }

    fn push_leaf(&mut self, value: f64) -> usize {
        self.feature.push(LEAF);
        self.threshold.push(0.0);
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.feature.len() - 1
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        let n = self.n_nodes();
        let bad = |msg: &str| Err(Error::Format(format!("tree: {msg}")));
        if n == 0
            || [
                self.threshold.len(),
                self.left.len(),
                self.right.len(),
                self.value.len(),
            ] != [n; 4]
        {
            return bad("array lengths differ");
        }
        for i in 0..n {
            let f = self.feature[i];
            if f == LEAF {
                continue;
            }
            if f < 0 || f as usize >= n_features {
                return bad("feature index out of range");
            }
            // children are always stored after their parent, so traversal terminates
            if self.left[i] as usize <= i
                || self.right[i] as usize <= i
                || self.left[i] as usize >= n
                || self.right[i] as usize >= n
            {
                return bad("child index out of order");
            }
        }
        Ok(())
    }
}

struct Grower<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [f64],
    min_leaf: usize,
    max_depth: usize,
    tree: Tree,
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
        let mean = sum / n as f64;
        let pure = rows.iter().all(|&r| self.y[r] == self.y[rows[0]]);
        if pure || depth >= self.max_depth || n < 2 * self.min_leaf {
            return self.tree.push_leaf(mean);
        }
        let Some(split) = self.best_split(rows, sum) else {
            return self.tree.push_leaf(mean);
        };
        let node = self.tree.push_leaf(mean);
        self.tree.feature[node] = split.feature as i32;
        self.tree.threshold[node] = split.threshold;
        let mid = partition(rows, |&r| self.x[[r, split.feature]] <= split.threshold);
        let (l, r) = rows.split_at_mut(mid);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.tree.left[node] = left as u32;
        self.tree.right[node] = right as u32;
        node
    }

    fn best_split(&self, rows: &[usize], total: f64) -> Option<SplitChoice> {
        let n = rows.len();
        let mean = total / n as f64;
        // with centred targets the gain of a split reduces to s_l^2 * n / (n_l * n_r)
        let sse: f64 = rows.iter().map(|&r| (self.y[r] - mean).powi(2)).sum();
        let mut best: Option<SplitChoice> = None;
        let mut order: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in 0..self.x.ncols() {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.x[[r, f]], self.y[r] - mean)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += order[i].1;
                let n_left = i + 1;
                if order[i].0 == order[i + 1].0 || n_left < self.min_leaf || n - n_left < self.min_leaf {
                    continue;
                }
                let gain = left_sum * left_sum * n as f64 / (n_left * (n - n_left)) as f64;
                if gain > best.as_ref().map_or(1e-12 * sse, |b| b.gain) {
                    let (a, b) = (order[i].0, order[i + 1].0);
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(SplitChoice {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// In-place partition; returns the count of rows satisfying `pred`.
fn partition<F: Fn(&usize) -> bool>(rows: &mut [usize], pred: F) -> usize {
    let mut k = 0;
    for i in 0..rows.len() {
        if pred(&rows[i]) {
            rows.swap(i, k);
            k += 1;
        }
    }
    k
}

/// Grow one tree on the given (possibly repeated) row indices.
pub fn fit_tree(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    rows: &mut [usize],
    max_depth: Option<usize>,
    min_leaf: usize,
) -> Tree {
    let mut grower = Grower {
        x,
        y,
        min_leaf: min_leaf.max(1),
        max_depth: max_depth.unwrap_or(usize::MAX),
        tree: Tree {
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
        },
    };
    grower.grow(rows, 0);
    grower.tree
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub params: ForestParams,
    /// Seed each tree's bootstrap was drawn with.
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    /// Assemble a forest from explicit trees.
    pub fn from_trees(n_features: usize, trees: Vec<Tree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::InvalidParameter("a forest needs at least one tree".into()));
        }
        let model = ForestModel {
            n_features,
            params: ForestParams {
                n_trees: trees.len(),
                ..ForestParams::default()
            },
            tree_seeds: vec![0; trees.len()],
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() || self.tree_seeds.len() != self.trees.len() {
            return Err(Error::Format("forest: tree list and seed list differ".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(self.n_features))
    }

    /// Per-tree predictions for one row.
    pub fn tree_predictions(&self, row: ArrayView1<'_, f64>) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict_row(row)).collect()
    }
}

impl Predictor for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        check_rows(rows, self.n_features)?;
        let m = self.trees.len() as f64;
        let one = |i: usize| self.trees.iter().map(|t| t.predict_row(rows.row(i))).sum::<f64>() / m;
        let out: Vec<f64> = if rows.nrows() >= PARALLEL_ROWS {
            (0..rows.nrows()).into_par_iter().map(one).collect()
        } else {
            (0..rows.nrows()).map(one).collect()
        };
        Ok(Array1::from(out))
    }
}

/// Train a random forest on rows `x` with targets `y`.
pub fn fit_forest(x: ArrayView2<'_, f64>, y: &[f64], params: &ForestParams) -> Result<ForestModel> {
    let n = x.nrows();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidTrainingData(format!(
            "need at least two rows with one target each, got {n} rows and {} targets",
            y.len()
        )));
    }
    if params.n_trees == 0 || params.min_leaf == 0 || params.max_depth == Some(0) {
        return Err(Error::InvalidParameter("forest parameters must be positive".into()));
    }
    check_rows(x, x.ncols())?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidTrainingData(format!("non-finite target at row {i}")));
    }
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64)
        .map(|t| seed::derive(params.seed, t))
        .collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rows: Vec<usize> = if params.bootstrap {
                let mut rng = seed::rng(s);
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            fit_tree(x, y, &mut rows, params.max_depth, params.min_leaf)
        })
        .collect();
    Ok(ForestModel {
        n_features: x.ncols(),
        params: *params,
        tree_seeds,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand_distr::{Distribution, Uniform};

    fn random_data(n: usize, k: usize, s: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = seed::rng(s);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let x = Array2::from_shape_fn((n, k), |_| u.sample(&mut rng));
        let y = x
            .outer_iter()
            .map(|r| 2.0 * r[0] - r[1] * r[2] + 0.1 * u.sample(&mut rng))
            .collect();
        (x, y)
    }

    fn thresholds_within_range(f: &ForestModel, x: &Array2<f64>) -> bool {
        f.trees.iter().all(|t| {
            t.feature.iter().zip(&t.threshold).all(|(&feat, &thr)| {
                if feat == LEAF {
                    return true;
                }
                let col = x.column(feat as usize);
                let lo = col.fold(f64::MAX, |a, b| a.min(*b));
                let hi = col.fold(f64::MIN, |a, b| a.max(*b));
                thr >= lo && thr <= hi
            })
        })
    }

    #[test]
    fn constant_response_predicts_constant() {
        let (x, _) = random_data(50, 3, 1);
        let y = vec![4.25; 50];
        let f = fit_forest(
            x.view(),
            &y,
            &ForestParams {
                n_trees: 10,
                ..Default::default()
            },
        )
        .unwrap();
        let p = f.predict(x.view()).unwrap();
        assert!(p.iter().all(|v| *v == 4.25));
    }

    #[test]
    fn single_split_separates_two_points() {
        let x = array![[0.0, 5.0], [1.0, 5.0]];
        let y = [3.0, 7.0];
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(1),
            min_leaf: 1,
            bootstrap: false,
            seed: 0,
        };
        let f = fit_forest(x.view(), &y, &params).unwrap();
        assert_eq!(f.trees[0].depth(), 1);
        assert_eq!(f.trees[0].feature[0], 0);
        assert_eq!(f.predict(x.view()).unwrap().to_vec(), vec![3.0, 7.0]);
        assert_eq!(
            f.predict(array![[-3.0, 0.0], [0.4, 0.0], [0.6, 0.0]].view())
                .unwrap()
                .to_vec(),
            vec![3.0, 3.0, 7.0]
        );
    }

    #[test]
    fn rejects_degenerate_training_sets() {
        let x = array![[1.0, 2.0]];
        assert!(matches!(
            fit_forest(x.view(), &[1.0], &ForestParams::default()),
            Err(Error::InvalidTrainingData(_))
        ));
        let x = Array2::<f64>::zeros((0, 2));
        assert!(fit_forest(x.view(), &[], &ForestParams::default()).is_err());
    }

    #[test]
    fn identical_trees_match_single_tree() {
        let (x, y) = random_data(60, 3, 2);
        let mut rows: Vec<usize> = (0..60).collect();
        let tree = fit_tree(x.view(), &y, &mut rows, None, 1);
        let one = ForestModel::from_trees(3, vec![tree.clone()]).unwrap();
        let many = ForestModel::from_trees(3, vec![tree; 7]).unwrap();
        let (a, b) = (one.predict(x.view()).unwrap(), many.predict(x.view()).unwrap());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn two_leaf_forest_averages() {
        let f = ForestModel::from_trees(1, vec![Tree::constant(10.0), Tree::constant(12.0)]).unwrap();
        assert_eq!(f.predict(array![[0.3]].view()).unwrap()[0], 11.0);
    }

    #[test]
    fn prediction_is_mean_of_trees_and_bounded() {
        let (x, y) = random_data(200, 4, 3);
        let f = fit_forest(
            x.view(),
            &y,
            &ForestParams {
                n_trees: 25,
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        let (probe, _) = random_data(100, 4, 4);
        let p = f.predict(probe.view()).unwrap();
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        for (row, pred) in probe.outer_iter().zip(p.iter()) {
            let per_tree = f.tree_predictions(row);
            let mean = per_tree.iter().sum::<f64>() / per_tree.len() as f64;
            assert!((mean - pred).abs() < 1e-12);
            assert!(*pred >= lo && *pred <= hi);
        }
        assert!(thresholds_within_range(&f, &x));
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = random_data(80, 3, 5);
        let params = ForestParams {
            n_trees: 12,
            seed: 77,
            ..Default::default()
        };
        assert_eq!(
            fit_forest(x.view(), &y, &params).unwrap(),
            fit_forest(x.view(), &y, &params).unwrap()
        );
    }

    #[test]
    fn predict_checks_input() {
        let f = ForestModel::from_trees(2, vec![Tree::constant(1.0)]).unwrap();
        assert!(matches!(
            f.predict(array![[1.0]].view()),
            Err(Error::FeatureCount { .. })
        ));
        assert!(matches!(
            f.predict(array![[1.0, f64::NAN]].view()),
            Err(Error::NonFiniteInput { row: 0, col: 1 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn depth_limit_and_leaf_size_hold(s in any::<u64>(), depth in 1usize..6, min_leaf in 1usize..6) {
            let (x, y) = random_data(60, 3, s);
            let params = ForestParams { n_trees: 3, max_depth: Some(depth), min_leaf, bootstrap: false, seed: s };
            let f = fit_forest(x.view(), &y, &params).unwrap();
            for t in &f.trees {
                prop_assert!(t.depth() <= depth);
                // count training rows per leaf
                let mut counts = vec![0usize; t.n_nodes()];
                for row in x.outer_iter() {
                    let mut i = 0;
                    while t.feature[i] != LEAF {
                        i = if row[t.feature[i] as usize] <= t.threshold[i] { t.left[i] } else { t.right[i] } as usize;
                    }
                    counts[i] += 1;
                }
                for (i, c) in counts.iter().enumerate() {
                    if t.feature[i] == LEAF {
                        prop_assert!(*c >= min_leaf);
                    }
                }
            }
        }
    }
}
