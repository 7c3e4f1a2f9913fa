//! Frank-Wolfe (conditional gradient) maximization of concave objectives
//! over sets that expose a linear minimization oracle.
//!
//! Away steps are on by default: the vanilla method zig-zags when the
//! maximizer lies on a face, and the callers need certified duality gaps
//! around 1e-7. With `away_steps = false` the method takes plain FW steps.

use serde::{Deserialize, Serialize};

use super::{dot, LinearOracle};
use crate::error::{check_dim, Error, Result};

/// A smooth concave objective with a gradient oracle.
pub trait ConcaveObjective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], grad: &mut [f64]);

    /// Maximizes `t -> f(x + t d)` over `[0, max_step]`.
    ///
    /// The default bisects on the directional derivative, which is
    /// nonincreasing for a concave `f`.
    fn line_search(&self, x: &[f64], d: &[f64], max_step: f64) -> f64 {
        let n = x.len();
        let mut grad = vec![0.0; n];
        let mut y = vec![0.0; n];
        let slope = |t: f64, y: &mut Vec<f64>, grad: &mut Vec<f64>| -> f64 {
            for i in 0..n {
                y[i] = x[i] + t * d[i];
            }
            self.gradient(y, grad);
            let s = dot(grad, d);
            if s.is_nan() {
                f64::NEG_INFINITY
            } else {
                s
            }
        };
        if slope(max_step, &mut y, &mut grad) >= 0.0 {
            return max_step;
        }
        let (mut lo, mut hi) = (0.0, max_step);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if slope(mid, &mut y, &mut grad) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * max_step.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwOptions {
    /// Stop once `gap <= tol * (1 + |value|)`.
    pub tol: f64,
    pub max_iters: usize,
    pub away_steps: bool,
}

impl Default for FwOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iters: 20_000, away_steps: true }
    }
}

/// Best iterate with its Frank-Wolfe duality gap; `value + gap` bounds the
/// true maximum from above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwSolution {
    pub x: Vec<f64>,
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Reasons [`fw_maximize_until`] may stop before the gap criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FwStop {
    Converged,
    Requested,
}

/// Maximizes `objective` over the oracle's set.
///
/// Returns `Error::IterationLimit` (carrying the best iterate) if the gap
/// criterion is not met within `max_iters`.
pub fn fw_maximize(
    objective: &dyn ConcaveObjective,
    oracle: &dyn LinearOracle,
    opts: &FwOptions,
) -> Result<FwSolution> {
    fw_maximize_until(objective, oracle, opts, None, |_, _| false).map(|(s, _)| s)
}

/// As [`fw_maximize`], with an optional starting vertex and an early-stop
/// predicate evaluated on `(value, gap)` each iteration.
pub fn fw_maximize_until(
    objective: &dyn ConcaveObjective,
    oracle: &dyn LinearOracle,
    opts: &FwOptions,
    start: Option<Vec<f64>>,
    mut stop: impl FnMut(f64, f64) -> bool,
) -> Result<(FwSolution, FwStop)> {
    let n = oracle.dim();
    check_dim(n, objective.dim())?;
    let x0 = match start {
        Some(x) => {
            check_dim(n, x.len())?;
            x
        }
        None => oracle.minimize(&vec![0.0; n])?,
    };
    let mut active: Vec<(Vec<f64>, f64)> = vec![(x0.clone(), 1.0)];
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut neg = vec![0.0; n];
    let mut value = objective.value(&x);
    let mut gap = f64::INFINITY;

    for it in 0..opts.max_iters {
        objective.gradient(&x, &mut grad);
        for i in 0..n {
            neg[i] = -grad[i];
        }
        let s = oracle.minimize(&neg)?;
        let gx = dot(&grad, &x);
        gap = (dot(&grad, &s) - gx).max(0.0);
        if gap <= opts.tol * (1.0 + value.abs()) {
            return Ok((FwSolution { x, value, gap, iterations: it }, FwStop::Converged));
        }
        if stop(value, gap) {
            return Ok((FwSolution { x, value, gap, iterations: it }, FwStop::Requested));
        }

        let mut away_idx = None;
        if opts.away_steps && active.len() > 1 {
            let (idx, gv) = active
                .iter()
                .enumerate()
                .map(|(i, (v, _))| (i, dot(&grad, v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("active set is nonempty");
            let away_gap = gx - gv;
            if away_gap > gap {
                away_idx = Some(idx);
            }
        }

        match away_idx {
            None => {
                for i in 0..n {
                    d[i] = s[i] - x[i];
                }
                let t = objective.line_search(&x, &d, 1.0).clamp(0.0, 1.0);
                if t == 0.0 {
                    // Numerically no ascent along the FW direction.
                    return Ok((FwSolution { x, value, gap, iterations: it }, FwStop::Converged));
                }
                for (_, w) in active.iter_mut() {
                    *w *= 1.0 - t;
                }
                if t >= 1.0 - 1e-15 {
                    active.clear();
                    active.push((s.clone(), 1.0));
                    x.copy_from_slice(&s);
                } else {
                    match active.iter_mut().find(|(v, _)| same_point(v, &s)) {
                        Some((_, w)) => *w += t,
                        None => active.push((s, t)),
                    }
                    for i in 0..n {
                        x[i] += t * d[i];
                    }
                }
            }
            Some(idx) => {
                let wv = active[idx].1;
                let max_step = wv / (1.0 - wv);
                for i in 0..n {
                    d[i] = x[i] - active[idx].0[i];
                }
                let t = objective.line_search(&x, &d, max_step).clamp(0.0, max_step);
                for (_, w) in active.iter_mut() {
                    *w *= 1.0 + t;
                }
                active[idx].1 -= t;
                if t >= max_step * (1.0 - 1e-12) {
                    active.swap_remove(idx);
                }
                for i in 0..n {
                    x[i] += t * d[i];
                }
            }
        }
        active.retain(|(_, w)| *w > 1e-15);
        let new_value = objective.value(&x);
        if new_value.is_finite() {
            value = new_value;
        } else {
            return Err(Error::InvalidInput("objective left its domain".into()));
        }
    }
    Err(Error::IterationLimit {
        best: Box::new(FwSolution { x, value, gap, iterations: opts.max_iters }),
    })
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()))
}

/// Concave quadratic `-1/2 (x - c)^T W (x - c) + q^T x` with diagonal `W`;
/// handy for tests and as a reference implementation of exact line search.
#[derive(Debug, Clone)]
pub struct DiagonalQuadratic {
    pub weights: Vec<f64>,
    pub center: Vec<f64>,
    pub linear: Vec<f64>,
}

impl ConcaveObjective for DiagonalQuadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut v = dot(&self.linear, x);
        for i in 0..x.len() {
            let r = x[i] - self.center[i];
            v -= 0.5 * self.weights[i] * r * r;
        }
        v
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        for i in 0..x.len() {
            grad[i] = self.linear[i] - self.weights[i] * (x[i] - self.center[i]);
        }
    }

    fn line_search(&self, x: &[f64], d: &[f64], max_step: f64) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.gradient(x, &mut g);
        let slope = dot(&g, d);
        let curv: f64 = (0..x.len()).map(|i| self.weights[i] * d[i] * d[i]).sum();
        if curv <= 0.0 {
            return if slope > 0.0 { max_step } else { 0.0 };
        }
        (slope / curv).clamp(0.0, max_step)
    }
}
