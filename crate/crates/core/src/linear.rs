//! Estimating a linear form `g^T x` when the observation stems from
//! `A_l(x)`, `x` in one of several convex sets `X_l`.
//!
//! Every pair of sets `(i, j)` gets a detector `phi_ij`, a scale `alpha_ij`
//! and two constants `rho_ij`, `kappa_ij`; the estimate combines the
//! K-fold detector values by a min-max rule and is `(rho, eps)`-reliable
//! with `rho = max rho_ij`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{PairAffinity, ParamRegion};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{
    dot, fw_maximize, fw_maximize_until, AffineMap, ConcaveObjective, FwOptions, FwSolution,
    LinearOracle, ProductSet,
};
use crate::obs::{Detector, Observation, Scheme, SchemeKind};

/// Box on the detector scale: `alpha` in `[1/R_CAP, R_CAP]`.
pub const R_CAP: f64 = 1e6;

/// Relative precision of the level search for `Opt_ij`.
const LEVEL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearProblem {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    /// `X_l` together with `A_l`.
    pub regions: Vec<ParamRegion>,
    pub g: Vec<f64>,
    pub epsilon: f64,
}

impl LinearProblem {
    /// Validates dimensions and that every `A_l(X_l)` lies in the
    /// parameter domain.
    pub fn new(
        scheme: Scheme,
        k: usize,
        regions: Vec<ParamRegion>,
        g: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::EmptyList);
        }
        if k == 0 {
            return Err(Error::InvalidInput("K must be at least 1".into()));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::EpsilonOutOfRange(epsilon));
        }
        for r in &regions {
            check_dim(g.len(), r.latent_dim())?;
            r.check_in_domain(&scheme)?;
        }
        Ok(Self { scheme, k, regions, g, epsilon })
    }

    /// `theta = ln(2I / eps)`.
    pub fn theta(&self) -> f64 {
        (2.0 * self.regions.len() as f64 / self.epsilon).ln()
    }

    pub fn num_sets(&self) -> usize {
        self.regions.len()
    }

    fn is_gaussian_singletons(&self) -> bool {
        self.scheme.kind == SchemeKind::Gaussian && self.regions.iter().all(|r| r.set.as_point().is_some())
    }
}

/// `scale * Phi(det; A x) + lin^T x`, concave in `x`.
struct CumulantObjective<'a> {
    scheme: &'a Scheme,
    det: &'a Detector,
    map: &'a AffineMap,
    scale: f64,
    lin: &'a [f64],
}

impl ConcaveObjective for CumulantObjective<'_> {
    fn dim(&self) -> usize {
        self.map.input_dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mu = self.map.apply(x);
        let phi = self.scheme.cumulant_unchecked(self.det, &mu).unwrap_or(f64::NAN);
        self.scale * phi + dot(self.lin, x)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let mu = self.map.apply(x);
        let mut gm = vec![0.0; mu.len()];
        self.scheme.cumulant_grad_mu(self.det, &mu, &mut gm);
        for v in gm.iter_mut() {
            *v *= self.scale;
        }
        grad.copy_from_slice(self.lin);
        self.map.add_transpose_apply(&gm, grad);
    }
}

/// Upper bound on `max_{x in X} [scale * Phi(det; A x) + lin^T x]`, exact
/// (an LP) when `Phi` is affine in the parameter.
fn max_cumulant(scheme: &Scheme, region: &ParamRegion, det: &Detector, scale: f64, lin: &[f64]) -> Result<f64> {
    match scheme.kind {
        SchemeKind::Gaussian | SchemeKind::Poisson => {
            // Phi(det; mu) = c0 + w^T mu.
            let (c0, w): (f64, Vec<f64>) = match scheme.kind {
                SchemeKind::Gaussian => (det.phi0 + 0.5 * dot(&det.coef, &det.coef), det.coef.clone()),
                _ => (det.phi0, det.coef.iter().map(|c| c.exp_m1()).collect()),
            };
            let mut cost = region.map.transpose_apply(&w);
            for (c, l) in cost.iter_mut().zip(lin) {
                *c = -(scale * *c + l);
            }
            let sol = region.set.lp_minimize(&cost)?;
            Ok(scale * (c0 + dot(&w, region.map.offset())) - sol.value)
        }
        SchemeKind::Discrete => {
            let obj = CumulantObjective { scheme, det, map: &region.map, scale, lin };
            let sol = fw_maximize(&obj, &region.set as &dyn LinearOracle, &FwOptions::default())?;
            Ok(sol.value + sol.gap)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Sign {
    Plus,
    Minus,
}

/// `Psi_{l,+-}(alpha, alpha * psi)` given the direction `psi` itself.
fn psi_along(problem: &LinearProblem, l: usize, alpha: f64, psi: &Detector, sign: Sign) -> Result<f64> {
    let (det, lin): (Detector, Vec<f64>) = match sign {
        Sign::Plus => (psi.clone(), problem.g.iter().map(|v| -v).collect()),
        Sign::Minus => (psi.scaled(-1.0), problem.g.clone()),
    };
    problem.scheme.check_detector(&det)?;
    let inner = max_cumulant(&problem.scheme, &problem.regions[l], &det, problem.k as f64 * alpha, &lin)?;
    Ok(inner + alpha * problem.theta())
}

fn check_pair_args(problem: &LinearProblem, l: usize, alpha: f64) -> Result<()> {
    if l >= problem.num_sets() {
        return Err(Error::InvalidInput(format!("set index {l} out of range")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

/// `max_{x in X_l} [K alpha Phi(phi / alpha; A_l x) - g^T x] + alpha theta`.
pub fn psi_plus(problem: &LinearProblem, l: usize, alpha: f64, phi: &Detector) -> Result<f64> {
    check_pair_args(problem, l, alpha)?;
    psi_along(problem, l, alpha, &phi.scaled(1.0 / alpha), Sign::Plus)
}

/// `max_{x in X_l} [K alpha Phi(-phi / alpha; A_l x) + g^T x] + alpha theta`.
pub fn psi_minus(problem: &LinearProblem, l: usize, alpha: f64, phi: &Detector) -> Result<f64> {
    check_pair_args(problem, l, alpha)?;
    psi_along(problem, l, alpha, &phi.scaled(1.0 / alpha), Sign::Minus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairStatus {
    Feasible,
    HellingerInfeasible,
}

/// Solution of the constrained program defining `Opt_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOpt {
    /// `-inf` when the affinity constraint cannot be met.
    pub opt: f64,
    /// Maximizer when feasible; the max-affinity pair otherwise.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub status: PairStatus,
}

fn half_gap(g: &[f64], x: &[f64], y: &[f64]) -> f64 {
    0.5 * (dot(g, y) - dot(g, x))
}

/// `Opt_ij = max { 1/2 g^T (y - x) : x in X_i, y in X_j,
/// K ln affinity(A_i x, A_j y) + theta >= 0 }`.
///
/// The constraint function is maximized first; if it stays negative the
/// pair is infeasible. Otherwise the optimal level of the linear objective
/// is located by bisection, each level being a concave feasibility problem
/// solved by Frank-Wolfe with early stopping.
pub fn opt_ij(problem: &LinearProblem, i: usize, j: usize) -> Result<PairOpt> {
    let (ri, rj) = (&problem.regions[i], &problem.regions[j]);
    let n = problem.g.len();
    let constraint = PairAffinity {
        kind: problem.scheme.kind,
        first: &ri.map,
        second: &rj.map,
        scale: problem.k as f64,
        offset: problem.theta(),
    };
    let product = ProductSet { first: &ri.set, second: &rj.set };
    let best = fw_maximize(&constraint, &product as &dyn LinearOracle, &FwOptions::default())?;
    let split = |z: &[f64]| (z[..n].to_vec(), z[n..].to_vec());
    if best.value + best.gap < 0.0 {
        let (x, y) = split(&best.x);
        return Ok(PairOpt { opt: f64::NEG_INFINITY, x, y, status: PairStatus::HellingerInfeasible });
    }

    // Unconstrained maximizer of the linear objective.
    let mut cost = problem.g.clone();
    cost.extend(problem.g.iter().map(|v| -v));
    let top = product.minimize(&cost)?;
    if constraint.value(&top) >= 0.0 {
        let (x, y) = split(&top);
        return Ok(PairOpt { opt: half_gap(&problem.g, &x, &y), x, y, status: PairStatus::Feasible });
    }

    let joint = ri.set.product(&rj.set);
    let mut row: Vec<f64> = problem.g.iter().map(|v| 0.5 * v).collect();
    row.extend(problem.g.iter().map(|v| -0.5 * v));
    let (mut feasible, mut lo) = (best.x.clone(), half_gap(&problem.g, &best.x[..n], &best.x[n..]));
    let mut hi = half_gap(&problem.g, &top[..n], &top[n..]);
    let opts = FwOptions { tol: 1e-9, ..FwOptions::default() };
    while hi - lo > LEVEL_TOL * (1.0 + lo.abs().max(hi.abs())) {
        let t = 0.5 * (lo + hi);
        let level = joint.with_inequality(row.clone(), -t)?;
        let sol = match fw_maximize_until(&constraint, &level as &dyn LinearOracle, &opts, None, |v, gap| {
            v >= 0.0 || v + gap < 0.0
        }) {
            Ok((sol, _)) => sol,
            Err(Error::IterationLimit { best }) => *best,
            Err(Error::Infeasible) => {
                hi = t;
                continue;
            }
            Err(e) => return Err(e),
        };
        if level_feasible(&sol) {
            lo = t.max(half_gap(&problem.g, &sol.x[..n], &sol.x[n..]));
            feasible = sol.x;
        } else {
            hi = t;
        }
    }
    let (x, y) = split(&feasible);
    Ok(PairOpt { opt: half_gap(&problem.g, &x, &y), x, y, status: PairStatus::Feasible })
}

fn level_feasible(sol: &FwSolution) -> bool {
    // Undecided after convergence counts as feasible within the solver
    // tolerance.
    sol.value >= 0.0 || sol.value + sol.gap >= 0.0
}

/// `Psi_ij(alpha, alpha * psi)`.
fn psi_pair_along(problem: &LinearProblem, i: usize, j: usize, alpha: f64, psi: &Detector) -> Result<(f64, f64)> {
    let plus = psi_along(problem, i, alpha, psi, Sign::Plus)?;
    let minus = psi_along(problem, j, alpha, psi, Sign::Minus)?;
    Ok((plus, minus))
}

/// A feasible `(alpha, phi)` on the ray `phi = alpha * psi_bar` with
/// `psi_bar = 1/2 ln(p_{A_j y} / p_{A_i x})`; `alpha` minimizes
/// `Psi_ij` along the ray over `[1/R_CAP, R_CAP]` (golden section in
/// `ln alpha`, endpoints included).
pub fn feasible_pair_solution(
    problem: &LinearProblem,
    i: usize,
    j: usize,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, Detector)> {
    let mu = problem.regions[i].map.apply(x);
    let nu = problem.regions[j].map.apply(y);
    let psi = problem.scheme.log_ratio_unchecked(&nu, &mu);
    let f = |s: f64| -> Result<f64> {
        let (p, m) = psi_pair_along(problem, i, j, s.exp(), &psi)?;
        Ok(0.5 * (p + m))
    };
    let s_max = R_CAP.ln();
    let (mut a, mut b) = (-s_max, s_max);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..200 {
        if b - a <= 1e-9 {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for s in [-s_max, s_max] {
        let v = f(s)?;
        if v <= best.1 {
            best = (s, v);
        }
    }
    let alpha = best.0.exp();
    Ok((alpha, psi.scaled(alpha)))
}

/// Per-pair quantities of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub alpha: f64,
    pub detector: Detector,
    pub kappa: f64,
    pub rho: f64,
    /// `None` for Hellinger-infeasible pairs (`Opt_ij = -inf`).
    pub opt: Option<f64>,
    pub status: PairStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimator {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    pub epsilon: f64,
    pub theta: f64,
    /// `pairs[i][j]`.
    pub pairs: Vec<Vec<PairEstimate>>,
    /// `rho_i = max_j max(rho_ij, rho_ji)`.
    pub rho_i: Vec<f64>,
    /// `rho = max_ij rho_ij`, the certified eps-risk.
    pub rho: f64,
}

/// Closed-form pair for Gaussian singletons with `alpha` capped at `R_CAP`.
fn gaussian_singleton_pair(problem: &LinearProblem, i: usize, j: usize) -> PairEstimate {
    let (xi, xj) = (problem.regions[i].set.as_point().unwrap(), problem.regions[j].set.as_point().unwrap());
    let (yi, yj) = (problem.regions[i].map.apply(xi), problem.regions[j].map.apply(xj));
    let k = problem.k as f64;
    let theta = problem.theta();
    let diff: Vec<f64> = yi.iter().zip(&yj).map(|(a, b)| a - b).collect();
    let dist = dot(&diff, &diff).sqrt();
    let base = 0.5 * (dot(&problem.g, xj) - dot(&problem.g, xi));
    let feasible = dist <= 2.0 * (2.0 * theta / k).sqrt();
    let (coef, alpha) = if feasible {
        (vec![0.0; diff.len()], 1.0 / R_CAP)
    } else {
        (diff.iter().map(|d| -R_CAP * d / dist).collect(), (k / (2.0 * theta)).sqrt() * R_CAP)
    };
    let sum: Vec<f64> = yi.iter().zip(&yj).map(|(a, b)| a + b).collect();
    let kappa = 0.5 * (dot(&problem.g, xi) + dot(&problem.g, xj)) - 0.5 * k * dot(&coef, &sum);
    let rho = 0.5 * k / alpha * dot(&coef, &coef) + alpha * theta + base + 0.5 * k * dot(&coef, &diff);
    PairEstimate {
        alpha,
        detector: Detector { kind: SchemeKind::Gaussian, phi0: 0.0, coef, shift: 0.0 },
        kappa,
        rho,
        opt: feasible.then_some(base),
        status: if feasible { PairStatus::Feasible } else { PairStatus::HellingerInfeasible },
    }
}

/// Generic pipeline for one pair.
pub fn solve_estimator_pair(problem: &LinearProblem, i: usize, j: usize) -> Result<PairEstimate> {
    let o = opt_ij(problem, i, j)?;
    let (alpha, detector) = feasible_pair_solution(problem, i, j, &o.x, &o.y)?;
    let psi = detector.scaled(1.0 / alpha);
    let (plus, minus) = psi_pair_along(problem, i, j, alpha, &psi)?;
    Ok(PairEstimate {
        alpha,
        detector,
        kappa: 0.5 * (minus - plus),
        rho: 0.5 * (plus + minus),
        opt: (o.status == PairStatus::Feasible).then_some(o.opt),
        status: o.status,
    })
}

/// Processes all `I^2` pairs in parallel. Gaussian problems on singletons
/// use the closed-form pair construction.
pub fn build_estimator(problem: &LinearProblem) -> Result<LinearEstimator> {
    let m = problem.num_sets();
    let closed = problem.is_gaussian_singletons();
    let flat: Vec<PairEstimate> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / m, idx % m);
            if closed {
                Ok(gaussian_singleton_pair(problem, i, j))
            } else {
                solve_estimator_pair(problem, i, j)
            }
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<Vec<PairEstimate>> = flat.chunks(m).map(|c| c.to_vec()).collect();
    let rho_i = (0..m)
        .map(|i| (0..m).map(|j| pairs[i][j].rho.max(pairs[j][i].rho)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let rho = pairs.iter().flatten().map(|p| p.rho).fold(f64::NEG_INFINITY, f64::max);
    if !rho.is_finite() {
        return Err(Error::InvalidInput(format!("risk bound is not finite: {rho}")));
    }
    Ok(LinearEstimator {
        scheme: problem.scheme,
        k: problem.k,
        epsilon: problem.epsilon,
        theta: problem.theta(),
        pairs,
        rho_i,
        rho,
    })
}

/// `1/2 [min_i max_j G_ij + max_j min_i G_ij]`.
pub fn combine(g: &[Vec<f64>]) -> f64 {
    let r_min = g.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).fold(f64::INFINITY, f64::min);
    let m = g[0].len();
    let c_max = (0..m)
        .map(|j| g.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    0.5 * (r_min + c_max)
}

impl LinearEstimator {
    /// `G_ij = sum_t phi_ij(omega_t) + kappa_ij`.
    pub fn g_matrix(&self, obs: &Observation) -> Result<Vec<Vec<f64>>> {
        if obs.k() != self.k {
            return Err(Error::KMismatch { expected: self.k, got: obs.k() });
        }
        let stats = obs.stats_for(self.scheme.dim);
        check_dim(self.scheme.dim, stats.totals.len())?;
        Ok(self
            .pairs
            .iter()
            .map(|row| row.iter().map(|p| p.detector.eval_stats(&stats) + p.kappa).collect())
            .collect())
    }
}

pub fn estimate(est: &LinearEstimator, obs: &Observation) -> Result<f64> {
    Ok(combine(&est.g_matrix(obs)?))
}

/// `2 ln(2I / eps) / ln(1 / (4 eps (1 - eps)))`.
pub fn near_optimality_factor(epsilon: f64, num_sets: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if num_sets == 0 {
        return Err(Error::EmptyList);
    }
    Ok(2.0 * (2.0 * num_sets as f64 / epsilon).ln() / (1.0 / (4.0 * epsilon * (1.0 - epsilon))).ln())
}

/// Smallest integer `K` with `K > factor * k_bar`.
pub fn inflated_k(epsilon: f64, num_sets: usize, k_bar: usize) -> Result<usize> {
    let t = near_optimality_factor(epsilon, num_sets)? * k_bar as f64;
    Ok(t.floor() as usize + 1)
}
