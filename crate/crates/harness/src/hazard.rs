//! Hazard-rate estimation under mixed multiplicative censoring.
//!
//! The lifetime distribution `x` on `{1..M}` is smooth and bounded below;
//! the exact lifetime is seen with probability `theta`, otherwise a
//! uniform fraction of it. The target `s_j(x) = x_j / sum_{i>=j} x_i` is
//! estimated by bisection.

use std::time::Instant;

use minimax_core::bisection::{dyadic_bounds, BisectionEstimator, BisectionParams, FunctionalProblem, Termination};
use minimax_core::geometry::{AffineMap, Polytope};
use minimax_core::nconvex::{Expr, NConvexFunction};
use minimax_core::obs::{rng_for, Scheme};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::HazardConfig;
use crate::error::Result;
use crate::output::{CsvTable, Timing};

/// `{x : x_i >= 1/(3M), sum x = 1, |x_{i-1} - 2x_i + x_{i+1}| <= 2/M^2}`.
pub fn smooth_simplex(m: usize) -> minimax_core::Result<Polytope> {
    let mf = m as f64;
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 1..m.saturating_sub(1) {
        let mut r = vec![0.0; m];
        r[i - 1] = 1.0;
        r[i] = -2.0;
        r[i + 1] = 1.0;
        rows.push(r.clone());
        rhs.push(2.0 / (mf * mf));
        rows.push(r.iter().map(|v| -v).collect());
        rhs.push(2.0 / (mf * mf));
    }
    Polytope::new(m, rows, rhs, vec![vec![1.0; m]], vec![1.0], vec![1.0 / (3.0 * mf); m], vec![1.0; m])
}

/// `theta I + (1 - theta) R`, column `i` of `R` uniform on the first `i` entries.
pub fn censoring_matrix(m: usize, theta: f64) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; m]; m];
    for (r, row) in a.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            if r <= c {
                *v = (1.0 - theta) / (c + 1) as f64;
            }
            if r == c {
                *v += theta;
            }
        }
    }
    a
}

/// The estimation problem for one `(theta, K)` cell.
pub fn hazard_problem(m: usize, j: usize, theta: f64, k: usize, epsilon: f64) -> minimax_core::Result<FunctionalProblem> {
    let x = smooth_simplex(m)?;
    let f = NConvexFunction::new(Expr::hazard(m, j), x.clone())?;
    let map = AffineMap::linear(censoring_matrix(m, theta))?;
    FunctionalProblem::new(Scheme::discrete(m), k, vec![x], map, f, epsilon)
}

/// One simulated estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardRecord {
    pub trial: usize,
    pub theta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub truth: f64,
    pub estimate: f64,
    pub error: f64,
    pub half_width: f64,
    pub covered: bool,
    pub termination: Termination,
    pub steps: usize,
    pub initial_half_width: f64,
}

/// Summary of one `(theta, K)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardCell {
    pub theta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub trials: usize,
    pub coverage: f64,
    pub coverage_floor: f64,
    pub median_error: f64,
    pub median_half_width: f64,
    pub initial_half_width: f64,
}

pub struct HazardOutcome {
    pub records: Vec<HazardRecord>,
    pub cells: Vec<HazardCell>,
    pub timing: Timing,
}

/// Runs every `(theta, K)` cell; trials inside a cell run in parallel, each
/// with its own stream `(seed, cell * 2^32 + trial)`.
pub fn run_hazard_experiment(cfg: &HazardConfig) -> Result<HazardOutcome> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut cells = Vec::new();
    let mut timing = Timing::default();
    let mut cell_idx = 0u64;
    for &theta in &cfg.thetas {
        for &k in &cfg.k_grid {
            let start = Instant::now();
            let problem = hazard_problem(cfg.m, cfg.j, theta, k, cfg.epsilon)?;
            let (a0, b0) = problem.value_range()?;
            let (a0, b0) = dyadic_bounds(a0, b0, cfg.l)?;
            let width = b0 - a0;
            let kappa = cfg.kappa.unwrap_or(width / 2f64.powi(cfg.l as i32 + 2));
            let params = BisectionParams { l: cfg.l, delta: cfg.epsilon / (2.0 * cfg.l as f64), kappa, k };
            let set = problem.sets[0].clone();
            let f = problem.f.clone();
            let est = BisectionEstimator::new(problem);
            let rows: Vec<HazardRecord> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| -> minimax_core::Result<HazardRecord> {
                    let mut rng = rng_for(cfg.seed, (cell_idx << 32) + t as u64);
                    let x = set.random_point(&mut rng, cfg.m)?;
                    let truth = f.eval(&x)?;
                    let mu = est.problem().map.apply(&x);
                    let obs = est.problem().scheme.sample(&mu, &mut rng, k)?;
                    let trace = est.estimate(&obs, &params, Some((a0, b0)))?;
                    let [lo, hi] = trace.output;
                    Ok(HazardRecord {
                        trial: t,
                        theta,
                        k,
                        truth,
                        estimate: trace.estimate,
                        error: (trace.estimate - truth).abs(),
                        half_width: 0.5 * (hi - lo),
                        covered: lo <= truth && truth <= hi,
                        termination: trace.termination,
                        steps: trace.steps.len(),
                        initial_half_width: 0.5 * width,
                    })
                })
                .collect::<minimax_core::Result<_>>()?;
            let n = rows.len() as f64;
            let hits = rows.iter().filter(|r| r.covered).count() as f64;
            cells.push(HazardCell {
                theta,
                k,
                trials: rows.len(),
                coverage: hits / n,
                coverage_floor: 1.0 - cfg.epsilon - 3.0 * (cfg.epsilon / n).sqrt(),
                median_error: median(rows.iter().map(|r| r.error).collect()),
                median_half_width: median(rows.iter().map(|r| r.half_width).collect()),
                initial_half_width: 0.5 * width,
            });
            timing.push(format!("theta={theta},K={k}"), start.elapsed());
            records.extend(rows);
            cell_idx += 1;
        }
    }
    Ok(HazardOutcome { records, cells, timing })
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn records_table(records: &[HazardRecord]) -> CsvTable {
    let mut t = CsvTable::new(
        "hazard_bisection",
        &[
            "trial",
            "theta",
            "K",
            "truth",
            "estimate",
            "error",
            "half_width",
            "covered",
            "termination",
            "steps",
            "initial_half_width",
        ],
    );
    for r in records {
        t.push(vec![
            r.trial.to_string(),
            fmt(r.theta),
            r.k.to_string(),
            fmt(r.truth),
            fmt(r.estimate),
            fmt(r.error),
            fmt(r.half_width),
            u8::from(r.covered).to_string(),
            termination_name(r.termination).to_string(),
            r.steps.to_string(),
            fmt(r.initial_half_width),
        ]);
    }
    t
}

pub fn cells_table(cells: &[HazardCell]) -> CsvTable {
    let mut t = CsvTable::new(
        "hazard_summary",
        &["theta", "K", "trials", "coverage", "coverage_floor", "median_error", "median_half_width", "initial_half_width"],
    );
    for c in cells {
        t.push(vec![
            fmt(c.theta),
            c.k.to_string(),
            c.trials.to_string(),
            fmt(c.coverage),
            fmt(c.coverage_floor),
            fmt(c.median_error),
            fmt(c.median_half_width),
            fmt(c.initial_half_width),
        ]);
    }
    t
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Disagreement => "disagreement",
        Termination::NotGood => "not_good",
        Termination::MaxSteps => "max_steps",
        Termination::InfeasibilityShrink => "infeasibility_shrink",
    }
}

/// Shortest round-trip representation, so the CSV is byte-stable.
pub(crate) fn fmt(v: f64) -> String {
    format!("{v:?}")
}

