//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop once the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 200,
            grad_tol: 1e-7,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub reason: StopReason,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Probe {
    alpha: f64,
    value: f64,
    slope: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

struct LineSearch<'a, F> {
    objective: &'a mut F,
    x0: &'a [f64],
    dir: &'a [f64],
    value0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evaluations: usize,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> LineSearch<'_, F> {
    fn probe(&mut self, alpha: f64) -> Probe {
        let x: Vec<f64> = self.x0.iter().zip(self.dir).map(|(x, d)| x + alpha * d).collect();
        let mut grad = vec![0.0; x.len()];
        let value = (self.objective)(&x, &mut grad);
        self.evaluations += 1;
        Probe {
            alpha,
            value,
            slope: dot(&grad, self.dir),
            x,
            grad,
        }
    }

    fn armijo_fails(&self, p: &Probe) -> bool {
        !p.value.is_finite() || p.value > self.value0 + self.c1 * p.alpha * self.slope0
    }

    fn curvature_holds(&self, p: &Probe) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    /// Bracketing phase (Nocedal & Wright, algorithm 3.5).
    fn search(&mut self, alpha_init: f64, max_steps: usize) -> Option<Probe> {
        let mut prev = Probe {
            alpha: 0.0,
            value: self.value0,
            slope: self.slope0,
            x: self.x0.to_vec(),
            grad: Vec::new(),
        };
        let mut alpha = alpha_init;
        for i in 0..max_steps {
            let p = self.probe(alpha);
            if self.armijo_fails(&p) || (i > 0 && p.value >= prev.value) {
                return self.zoom(prev, p, max_steps);
            }
            if self.curvature_holds(&p) {
                return Some(p);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev, max_steps);
            }
            alpha *= 2.0;
            prev = p;
        }
        None
    }

    /// Zoom phase (algorithm 3.6) with safeguarded cubic interpolation.
    fn zoom(&mut self, mut lo: Probe, mut hi: Probe, max_steps: usize) -> Option<Probe> {
        for _ in 0..max_steps {
            let alpha = interpolate(&lo, &hi);
            let p = self.probe(alpha);
            if self.armijo_fails(&p) || p.value >= lo.value {
                hi = p;
            } else {
                if self.curvature_holds(&p) {
                    return Some(p);
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
            if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
                break;
            }
        }
        // accept a point with sufficient decrease even if curvature never held
        (lo.alpha > 0.0 && lo.value < self.value0).then_some(lo)
    }
}

/// Cubic minimizer of the Hermite interpolant on [lo, hi], kept away from the
/// interval ends; bisection when the cubic is unusable.
fn interpolate(lo: &Probe, hi: &Probe) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    let mid = 0.5 * (a + b);
    if !hi.value.is_finite() || !disc.is_finite() || disc < 0.0 {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = (a.min(b), a.max(b));
    let margin = 0.1 * (right - left);
    if t.is_finite() && t > left + margin && t < right - margin {
        t
    } else {
        mid
    }
}

/// Minimize `objective` starting from `x`, which is overwritten with the
/// final iterate. `objective(x, grad)` returns the value and writes the
/// gradient. `on_iter(iteration, x, value)` runs after every accepted step.
pub fn minimize<F, C>(x: &mut Vec<f64>, mut objective: F, config: &LbfgsConfig, mut on_iter: C) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    C: FnMut(usize, &[f64], f64),
{
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut value = objective(x, &mut grad);
    let mut evaluations = 1;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.memory);
    let mut iterations = 0;
    let mut reason = StopReason::MaxIterations;
    let mut dir = vec![0.0; n];
    let mut alphas = vec![0.0; config.memory];

    while iterations < config.max_iter {
        if norm(&grad) < config.grad_tol {
            reason = StopReason::GradientTolerance;
            break;
        }
        // two-loop recursion
        dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
        for (i, (s, y, rho)) in history.iter().enumerate().rev() {
            alphas[i] = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yv)| *d -= alphas[i] * yv);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for (i, (s, y, rho)) in history.iter().enumerate() {
            let beta = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, sv)| *d += (alphas[i] - beta) * sv);
        }
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            history.clear();
            dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
            slope = dot(&grad, &dir);
        }
        let alpha_init = if history.is_empty() {
            (1.0 / norm(&grad)).min(1.0)
        } else {
            1.0
        };

        let mut ls = LineSearch {
            objective: &mut objective,
            x0: x,
            dir: &dir,
            value0: value,
            slope0: slope,
            c1: config.c1,
            c2: config.c2,
            evaluations: 0,
        };
        let accepted = ls.search(alpha_init, config.max_line_search);
        evaluations += ls.evaluations;
        let Some(step) = accepted else {
            if history.is_empty() {
                reason = StopReason::LineSearchFailed;
                break;
            }
            // retry from steepest descent once
            history.clear();
            continue;
        };

        let s: Vec<f64> = step.x.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        *x = step.x;
        grad = step.grad;
        value = step.value;
        iterations += 1;
        on_iter(iterations, x, value);
    }
    LbfgsReport {
        iterations,
        evaluations,
        value,
        grad_norm: norm(&grad),
        reason,
    }
}
