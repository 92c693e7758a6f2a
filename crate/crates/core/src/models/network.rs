//! Feed-forward regression network (tanh hidden layers, linear output) fit
//! full-batch with L-BFGS on half mean squared error plus an L2 penalty on
//! the weights.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::lbfgs::{self, LbfgsConfig, StopReason};
use crate::error::{Error, Result};
use crate::predictor::{check_rows, Predictor};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub hidden: Vec<usize>,
    pub max_iter: usize,
    pub l2: f64,
    pub seed: u64,
    /// Training MSE divided by the target variance above which a run is
    /// reported as stagnated.
    pub stagnation_threshold: f64,
    /// Automatic reseeding attempts after a stagnated run.
    #[serde(default)]
    pub retries: usize,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            hidden: vec![8, 4],
            max_iter: 200,
            l2: 1e-4,
            seed: 42,
            stagnation_threshold: 0.05,
            retries: 0,
        }
    }
}

/// Per-feature affine scaling to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fit on the columns of `x`. Constant columns get unit scale.
    pub fn fit(x: ArrayView2<'_, f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("standardizer needs at least one row"));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 });
        Ok(Self {
            mean: mean.to_vec(),
            scale: scale.to_vec(),
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for (mut col, (m, s)) in out.columns_mut().into_iter().zip(self.mean.iter().zip(&self.scale)) {
            col.mapv_inplace(|v| (v - m) / s);
        }
        out
    }

    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = z.to_owned();
        for (mut col, (m, s)) in out.columns_mut().into_iter().zip(self.mean.iter().zip(&self.scale)) {
            col.mapv_inplace(|v| v * s + m);
        }
        out
    }
}

/// Affine scaling of the response; the network fits `(y - mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScale {
    pub const IDENTITY: TargetScale = TargetScale { mean: 0.0, scale: 1.0 };

    /// Mean and population standard deviation of `y`; unit scale if constant.
    pub fn fit(y: &[f64]) -> Self {
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self {
            mean,
            scale: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.scale).collect()
    }

    pub fn invert(&self, v: f64) -> f64 {
        v * self.scale + self.mean
    }
}

/// Outcome of the optimizer run that produced a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iterations: usize,
    pub best_iteration: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    /// `train_mse` over the training target variance.
    pub relative_loss: f64,
    pub stop: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    /// Input, hidden and output widths, e.g. `[6, 8, 4, 1]`.
    pub layer_sizes: Vec<usize>,
    /// Layer `l` weights, shape `(layer_sizes[l], layer_sizes[l + 1])`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub standardizer: Standardizer,
    pub target: TargetScale,
    pub seed: u64,
    pub training: Option<TrainingSummary>,
}

/// Flat parameter layout: for each layer, weights then biases.
#[derive(Debug, Clone)]
struct Layout {
    sizes: Vec<usize>,
}

impl Layout {
    fn n_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// (weight offset, bias offset, fan_in, fan_out) per layer.
    fn layers(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let entry = (off, off + w[0] * w[1], w[0], w[1]);
                off += w[0] * w[1] + w[1];
                entry
            })
            .collect()
    }
}

fn weight_view(params: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &params[off..off + rows * cols]).expect("layout")
}

/// Forward pass on standardized inputs; returns the activations of every layer
/// (input first, output last).
fn forward(layout: &Layout, params: &[f64], z: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
    let layers = layout.layers();
    let mut acts = vec![z.to_owned()];
    for (i, &(w_off, b_off, fan_in, fan_out)) in layers.iter().enumerate() {
        let w = weight_view(params, w_off, fan_in, fan_out);
        let b = ArrayView2::from_shape((1, fan_out), &params[b_off..b_off + fan_out]).expect("layout");
        let mut a = acts.last().expect("input").dot(&w) + b;
        if i + 1 < layers.len() {
            a.mapv_inplace(f64::tanh);
        }
        acts.push(a);
    }
    acts
}

/// Half MSE plus `l2 / (2n) * Σ w²` and its gradient.
fn loss_and_grad(layout: &Layout, params: &[f64], z: ArrayView2<'_, f64>, y: &[f64], l2: f64, grad: &mut [f64]) -> f64 {
    let n = z.nrows() as f64;
    let acts = forward(layout, params, z);
    let out = acts.last().expect("output");
    let mut delta = Array2::zeros((out.nrows(), 1));
    let mut loss = 0.0;
    for (i, (p, t)) in out.column(0).iter().zip(y).enumerate() {
        let r = p - t;
        loss += r * r;
        delta[[i, 0]] = r / n;
    }
    loss /= 2.0 * n;
    let layers = layout.layers();
    let mut penalty = 0.0;
    for (l, &(w_off, b_off, fan_in, fan_out)) in layers.iter().enumerate().rev() {
        let w = weight_view(params, w_off, fan_in, fan_out);
        penalty += w.iter().map(|v| v * v).sum::<f64>();
        let dw = acts[l].t().dot(&delta) + &(w.to_owned() * (l2 / n));
        grad[w_off..w_off + fan_in * fan_out].copy_from_slice(dw.as_standard_layout().as_slice().expect("contiguous"));
        let db = delta.sum_axis(Axis(0));
        grad[b_off..b_off + fan_out].copy_from_slice(db.as_slice().expect("contiguous"));
        if l > 0 {
            let mut next = delta.dot(&w.t());
            next.zip_mut_with(&acts[l], |d, a| *d *= 1.0 - a * a);
            delta = next;
        }
    }
    loss + l2 / (2.0 * n) * penalty
}

fn mse(pred: &Array1<f64>, y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64
}

impl NetworkModel {
    fn layout(&self) -> Layout {
        Layout {
            sizes: self.layer_sizes.clone(),
        }
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    fn from_flat(sizes: Vec<usize>, params: &[f64], standardizer: Standardizer, seed: u64) -> Self {
        let layout = Layout { sizes: sizes.clone() };
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (w_off, b_off, fan_in, fan_out) in layout.layers() {
            weights.push(params[w_off..w_off + fan_in * fan_out].to_vec());
            biases.push(params[b_off..b_off + fan_out].to_vec());
        }
        Self {
            layer_sizes: sizes,
            weights,
            biases,
            standardizer,
            target: TargetScale::IDENTITY,
            seed,
            training: None,
        }
    }

    /// Network with every weight and bias zero.
    pub fn zeros(layer_sizes: Vec<usize>, standardizer: Standardizer) -> Self {
        let n = Layout {
            sizes: layer_sizes.clone(),
        }
        .n_params();
        Self::from_flat(layer_sizes, &vec![0.0; n], standardizer, 0)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.layer_sizes;
        let bad = |m: &str| Err(Error::Format(format!("network: {m}")));
        if s.len() < 2 || *s.last().unwrap() != 1 || s.contains(&0) {
            return bad("layer sizes must be positive and end in a single output");
        }
        if self.weights.len() != s.len() - 1 || self.biases.len() != s.len() - 1 {
            return bad("layer count mismatch");
        }
        for (l, w) in s.windows(2).enumerate() {
            if self.weights[l].len() != w[0] * w[1] || self.biases[l].len() != w[1] {
                return bad("parameter shape mismatch");
            }
        }
        if self.standardizer.mean.len() != s[0] || self.standardizer.scale.len() != s[0] {
            return bad("standardizer width mismatch");
        }
        if !(self.target.scale > 0.0 && self.target.scale.is_finite() && self.target.mean.is_finite()) {
            return bad("invalid target scale");
        }
        if self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return bad("non-finite parameter");
        }
        Ok(())
    }

    /// Training loss (on scaled targets) and its gradient at the current
    /// parameters.
    pub fn loss_gradient(&self, x: ArrayView2<'_, f64>, y: &[f64], l2: f64) -> (f64, Vec<f64>) {
        let params = self.flat_params();
        let mut grad = vec![0.0; params.len()];
        let loss = self.loss_into(x, y, l2, &params, &mut grad);
        (loss, grad)
    }

    /// Training loss at parameters `params` in the flat layout.
    pub fn loss_at(&self, x: ArrayView2<'_, f64>, y: &[f64], l2: f64, params: &[f64]) -> f64 {
        let mut grad = vec![0.0; params.len()];
        self.loss_into(x, y, l2, params, &mut grad)
    }

    fn loss_into(&self, x: ArrayView2<'_, f64>, y: &[f64], l2: f64, params: &[f64], grad: &mut [f64]) -> f64 {
        let z = self.standardizer.transform(x);
        loss_and_grad(&self.layout(), params, z.view(), &self.target.apply(y), l2, grad)
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.flat_params()
    }

    pub fn with_parameters(&self, params: &[f64]) -> Self {
        let mut m = Self::from_flat(self.layer_sizes.clone(), params, self.standardizer.clone(), self.seed);
        m.target = self.target;
        m.training = self.training.clone();
        m
    }
}

impl Predictor for NetworkModel {
    fn n_features(&self) -> usize {
        self.layer_sizes[0]
    }

    fn predict(&self, rows: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        check_rows(rows, self.n_features())?;
        let z = self.standardizer.transform(rows);
        let acts = forward(&self.layout(), &self.flat_params(), z.view());
        Ok(acts.last().expect("output").column(0).mapv(|v| self.target.invert(v)))
    }
}

/// Glorot-uniform initialization, biases included.
fn init_params(layout: &Layout, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive_str(seed, "network-init"));
    let mut params = vec![0.0; layout.n_params()];
    for (w_off, b_off, fan_in, fan_out) in layout.layers() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        for p in &mut params[w_off..b_off + fan_out] {
            *p = u.sample(&mut rng);
        }
    }
    params
}

/// Train a network on `(x_train, y_train)`, keeping the parameters with the
/// lowest validation MSE seen across iterations.
pub fn fit_network(
    x_train: ArrayView2<'_, f64>,
    y_train: &[f64],
    x_val: ArrayView2<'_, f64>,
    y_val: &[f64],
    params: &NetworkParams,
) -> Result<NetworkModel> {
    if x_train.nrows() < 2 || x_train.nrows() != y_train.len() {
        return Err(Error::InvalidTrainingData(
            "training split needs at least two labelled rows".into(),
        ));
    }
    if x_val.nrows() == 0 || x_val.nrows() != y_val.len() || x_val.ncols() != x_train.ncols() {
        return Err(Error::InvalidTrainingData(
            "validation split is empty or misshapen".into(),
        ));
    }
    if params.hidden.contains(&0) || params.max_iter == 0 || !(params.l2 >= 0.0) {
        return Err(Error::InvalidParameter("network parameters must be positive".into()));
    }
    check_rows(x_train, x_train.ncols())?;
    check_rows(x_val, x_train.ncols())?;

    let standardizer = Standardizer::fit(x_train)?;
    let z_train = standardizer.transform(x_train);
    let z_val = standardizer.transform(x_val);
    let target = TargetScale::fit(y_train);
    let (t_train, t_val) = (target.apply(y_train), target.apply(y_val));
    let mut sizes = vec![x_train.ncols()];
    sizes.extend(&params.hidden);
    sizes.push(1);
    let layout = Layout { sizes: sizes.clone() };

    let mut theta = init_params(&layout, params.seed);
    let val_mse = |p: &[f64]| {
        let out = forward(&layout, p, z_val.view());
        mse(&out.last().expect("output").column(0).to_owned(), &t_val)
    };
    let mut best = (val_mse(&theta), 0usize, theta.clone());
    let config = LbfgsConfig {
        max_iter: params.max_iter,
        ..LbfgsConfig::default()
    };
    let report = lbfgs::minimize(
        &mut theta,
        |p, g| loss_and_grad(&layout, p, z_train.view(), &t_train, params.l2, g),
        &config,
        |it, p, _| {
            let v = val_mse(p);
            if v < best.0 {
                best = (v, it, p.to_vec());
            }
        },
    );
    let (best_val, best_iteration, best_params) = best;
    let mut model = NetworkModel::from_flat(sizes, &best_params, standardizer, params.seed);
    model.target = target;
    model.validate()?;

    let train_mse = mse(&model.predict(x_train)?, y_train);
    let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
    let var = y_train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y_train.len() as f64;
    let relative_loss = if var > 0.0 { train_mse / var } else { 0.0 };
    model.training = Some(TrainingSummary {
        iterations: report.iterations,
        best_iteration,
        train_mse,
        val_mse: best_val * target.scale * target.scale,
        relative_loss,
        stop: match report.reason {
            StopReason::GradientTolerance => "gradient-tolerance",
            StopReason::MaxIterations => "max-iterations",
            StopReason::LineSearchFailed => "line-search-failed",
        }
        .to_string(),
    });
    if relative_loss > params.stagnation_threshold {
        return Err(Error::Stagnated {
            seed: params.seed,
            relative_loss,
            threshold: params.stagnation_threshold,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn random_rows(n: usize, k: usize, s: u64) -> Array2<f64> {
        let mut rng = seed::rng(s);
        let u = Uniform::new(-2.0, 2.0).unwrap();
        Array2::from_shape_fn((n, k), |_| u.sample(&mut rng))
    }

    #[test]
    fn zero_network_predicts_zero() {
        let m = NetworkModel::zeros(
            vec![6, 8, 4, 1],
            Standardizer {
                mean: vec![1.0; 6],
                scale: vec![2.0; 6],
            },
        );
        let p = m.predict(random_rows(10, 6, 1).view()).unwrap();
        assert!(p.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = random_rows(30, 6, 2);
        let y: Vec<f64> = x.outer_iter().map(|r| r[0].sin() + r[1] * r[2]).collect();
        let layout = Layout {
            sizes: vec![6, 8, 4, 1],
        };
        let theta = init_params(&layout, 3);
        let m = NetworkModel::from_flat(layout.sizes.clone(), &theta, Standardizer::fit(x.view()).unwrap(), 3);
        let (_, grad) = m.loss_gradient(x.view(), &y, 0.3);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += h;
            minus[i] -= h;
            let fd = (m.loss_at(x.view(), &y, 0.3, &plus) - m.loss_at(x.view(), &y, 0.3, &minus)) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-5, "worst relative gradient error {worst}");
    }

    #[test]
    fn fits_linear_data() {
        let x = random_rows(120, 6, 4);
        let f = |r: ndarray::ArrayView1<f64>| 11.9 + 0.1 * r[0] - 0.05 * r[3] + 0.02 * r[5];
        let y: Vec<f64> = x.outer_iter().map(f).collect();
        let xv = random_rows(30, 6, 5);
        let yv: Vec<f64> = xv.outer_iter().map(f).collect();
        let m = fit_network(x.view(), &y, xv.view(), &yv, &NetworkParams::default()).unwrap();
        let xt = random_rows(50, 6, 6);
        let pred = m.predict(xt.view()).unwrap();
        let mae = xt
            .outer_iter()
            .zip(pred.iter())
            .map(|(r, p)| (f(r) - p).abs())
            .sum::<f64>()
            / 50.0;
        assert!(mae < 1e-3, "mae {mae}");
        assert!(m.weights.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn same_seed_same_weights() {
        let x = random_rows(40, 3, 7);
        let y: Vec<f64> = x.outer_iter().map(|r| r[0] * r[1]).collect();
        let p = NetworkParams {
            max_iter: 30,
            stagnation_threshold: f64::MAX,
            ..Default::default()
        };
        let a = fit_network(x.view(), &y, x.view(), &y, &p).unwrap();
        let b = fit_network(x.view(), &y, x.view(), &y, &p).unwrap();
        assert_eq!(a, b);
        let c = fit_network(x.view(), &y, x.view(), &y, &NetworkParams { seed: 43, ..p }).unwrap();
        assert_ne!(a.weights, c.weights);
    }

    #[test]
    fn stagnation_is_signalled() {
        let x = random_rows(40, 2, 8);
        let y: Vec<f64> = x
            .outer_iter()
            .map(|r| (5.0 * r[0]).sin() * (7.0 * r[1]).cos())
            .collect();
        let p = NetworkParams {
            hidden: vec![1],
            max_iter: 5,
            stagnation_threshold: 1e-6,
            ..Default::default()
        };
        assert!(matches!(
            fit_network(x.view(), &y, x.view(), &y, &p),
            Err(Error::Stagnated { .. })
        ));
    }

    #[test]
    fn rejects_empty_splits() {
        let x = array![[1.0], [2.0]];
        let empty = Array2::<f64>::zeros((0, 1));
        assert!(fit_network(x.view(), &[1.0, 2.0], empty.view(), &[], &NetworkParams::default()).is_err());
        assert!(fit_network(empty.view(), &[], x.view(), &[1.0, 2.0], &NetworkParams::default()).is_err());
    }

    proptest! {
        #[test]
        fn standardizer_round_trip(s in any::<u64>(), n in 2usize..20) {
            let x = random_rows(n, 4, s) * 100.0 + 7.0;
            let st = Standardizer::fit(x.view()).unwrap();
            let back = st.inverse_transform(st.transform(x.view()).view());
            for (a, b) in x.iter().zip(back.iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }
}
