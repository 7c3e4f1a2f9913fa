//! Linear-form experiments: the risk certificate `max rho_ij` across a K
//! grid on random Gaussian singleton problems, and Monte-Carlo coverage of
//! `|estimate - g^T x| <= rho_l`.

use std::time::Instant;

use minimax_core::affinity::ParamRegion;
use minimax_core::geometry::{AffineMap, Polytope};
use minimax_core::linear::{build_estimator, estimate, LinearEstimator, LinearProblem};
use minimax_core::obs::{rng_for, ObsRng, Scheme};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{CustomLinearConfig, GaussianSingletonsConfig, LinearConfig};
use crate::error::{HarnessError, Result};
use crate::hazard::{fmt, median};
use crate::output::{CsvTable, Timing};

/// Trial indices must fit below this so stream ids stay distinct.
const MAX_TRIALS: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearRecord {
    pub instance: usize,
    pub k: usize,
    pub trial: usize,
    pub set: usize,
    pub truth: f64,
    pub estimate: f64,
    pub error: f64,
    pub rho_max: f64,
    pub rho_set: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearCell {
    pub k: usize,
    pub instances: usize,
    pub median_rho_max: f64,
    pub trials: usize,
    pub coverage: f64,
    pub coverage_floor: f64,
}

pub struct LinearOutcome {
    pub records: Vec<LinearRecord>,
    pub cells: Vec<LinearCell>,
    pub timing: Timing,
}

fn stream(instance: usize, k_idx: usize, trial: usize) -> u64 {
    ((instance as u64) << 40) | ((k_idx as u64) << 24) | trial as u64
}

fn normals(rng: &mut ObsRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Largest singular value by power iteration on `A^T A`.
pub fn spectral_norm(a: &[Vec<f64>]) -> f64 {
    let n = a.first().map_or(0, Vec::len);
    if n == 0 {
        return 0.0;
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut sigma = 0.0;
    for _ in 0..10_000 {
        let av: Vec<f64> = a.iter().map(|row| row.iter().zip(&v).map(|(x, y)| x * y).sum()).collect();
        let mut w = vec![0.0; n];
        for (row, s) in a.iter().zip(&av) {
            for (wi, x) in w.iter_mut().zip(row) {
                *wi += s * x;
            }
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
        let done = (next - sigma).abs() <= 1e-15 * next;
        sigma = next;
        if done {
            break;
        }
    }
    sigma
}

/// One random instance: `A` with i.i.d. normal entries scaled to unit
/// spectral norm, singletons `x_i ~ N(0, I_n)`.
pub fn gaussian_singleton_regions(cfg: &GaussianSingletonsConfig, instance: usize) -> Result<Vec<ParamRegion>> {
    let mut rng = rng_for(cfg.seed, u64::MAX - instance as u64);
    let mut a: Vec<Vec<f64>> = (0..cfg.m).map(|_| normals(&mut rng, cfg.n)).collect();
    let s = spectral_norm(&a);
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    let map = AffineMap::linear(a)?;
    (0..cfg.num_sets)
        .map(|_| Ok(ParamRegion::new(Polytope::point(&normals(&mut rng, cfg.n))?, map.clone())?))
        .collect()
}

/// Simulates `trials` estimates; signal `t` is `signals[pick(t)]`.
fn simulate(
    p: &LinearProblem,
    est: &LinearEstimator,
    signals: &[(usize, Vec<f64>)],
    seed: u64,
    instance: usize,
    k_idx: usize,
    trials: usize,
) -> Result<Vec<LinearRecord>> {
    let recs = (0..trials)
        .into_par_iter()
        .map(|t| -> minimax_core::Result<LinearRecord> {
            let mut rng = rng_for(seed, stream(instance, k_idx, t));
            let (set, x) = &signals[rng.gen_range(0..signals.len())];
            let region = &p.regions[*set];
            let truth: f64 = p.g.iter().zip(x).map(|(a, b)| a * b).sum();
            let obs = p.scheme.sample(&region.map.apply(x), &mut rng, p.k)?;
            let e = estimate(est, &obs)?;
            let error = (e - truth).abs();
            Ok(LinearRecord {
                instance,
                k: p.k,
                trial: t,
                set: *set,
                truth,
                estimate: e,
                error,
                rho_max: est.rho,
                rho_set: est.rho_i[*set],
                covered: error <= est.rho_i[*set],
            })
        })
        .collect::<minimax_core::Result<_>>()?;
    Ok(recs)
}

fn summarize(records: &[LinearRecord], k_grid: &[usize], epsilon: f64) -> Vec<LinearCell> {
    k_grid
        .iter()
        .map(|&k| {
            let rows: Vec<&LinearRecord> = records.iter().filter(|r| r.k == k).collect();
            let mut per_instance: Vec<(usize, f64)> = rows.iter().map(|r| (r.instance, r.rho_max)).collect();
            per_instance.dedup_by_key(|x| x.0);
            let n = rows.len();
            LinearCell {
                k,
                instances: per_instance.len(),
                median_rho_max: median(per_instance.iter().map(|x| x.1).collect()),
                trials: n,
                coverage: rows.iter().filter(|r| r.covered).count() as f64 / n as f64,
                coverage_floor: 1.0 - epsilon - 3.0 * (epsilon / n as f64).sqrt(),
            }
        })
        .collect()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials >= MAX_TRIALS {
        return Err(HarnessError::Config(format!("trials must be below {MAX_TRIALS}")));
    }
    Ok(())
}

fn run_singletons(cfg: &GaussianSingletonsConfig) -> Result<LinearOutcome> {
    check_trials(cfg.trials)?;
    let mut g = vec![0.0; cfg.n];
    g[0] = 1.0;
    let mut records = Vec::new();
    let mut timing = Timing::default();
    for instance in 0..cfg.instances {
        let regions = gaussian_singleton_regions(cfg, instance)?;
        let signals: Vec<(usize, Vec<f64>)> =
            regions.iter().enumerate().map(|(i, r)| (i, r.set.as_point().expect("singleton").to_vec())).collect();
        for (k_idx, &k) in cfg.k_grid.iter().enumerate() {
            let start = Instant::now();
            let p = LinearProblem::new(Scheme::gaussian(cfg.m), k, regions.clone(), g.clone(), cfg.epsilon)?;
            let est = build_estimator(&p)?;
            records.extend(simulate(&p, &est, &signals, cfg.seed, instance, k_idx, cfg.trials)?);
            timing.push(format!("instance={instance},K={k}"), start.elapsed());
        }
    }
    let cells = summarize(&records, &cfg.k_grid, cfg.epsilon);
    Ok(LinearOutcome { records, cells, timing })
}

fn run_custom(cfg: &CustomLinearConfig) -> Result<LinearOutcome> {
    check_trials(cfg.trials)?;
    let base = &cfg.problem;
    let mut rng = rng_for(cfg.seed, u64::MAX);
    let mut points = Vec::new();
    for (l, r) in base.regions.iter().enumerate() {
        for _ in 0..cfg.points_per_set {
            let cost: Vec<f64> = (0..r.latent_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            points.push((l, r.set.lp_minimize(&cost)?.point));
        }
    }
    let k_grid = cfg.k_grid();
    let mut records = Vec::new();
    let mut timing = Timing::default();
    for (k_idx, &k) in k_grid.iter().enumerate() {
        let start = Instant::now();
        let p = LinearProblem { k, ..base.clone() };
        let est = build_estimator(&p)?;
        // each signal is its own "instance" so coverage is per (l, x)
        for (pi, point) in points.iter().enumerate() {
            records.extend(simulate(&p, &est, std::slice::from_ref(point), cfg.seed, pi, k_idx, cfg.trials)?);
        }
        timing.push(format!("K={k}"), start.elapsed());
    }
    let cells = summarize(&records, &k_grid, base.epsilon);
    Ok(LinearOutcome { records, cells, timing })
}

pub fn run_linear_experiment(cfg: &LinearConfig) -> Result<LinearOutcome> {
    cfg.validate()?;
    match cfg {
        LinearConfig::GaussianSingletons(c) => run_singletons(c),
        LinearConfig::Custom(c) => run_custom(c),
    }
}

pub fn records_table(kind: &str, records: &[LinearRecord]) -> CsvTable {
    let mut t = CsvTable::new(
        kind,
        &["instance", "K", "trial", "set", "truth", "estimate", "error", "rho_max", "rho_set", "covered"],
    );
    for r in records {
        t.push(vec![
            r.instance.to_string(),
            r.k.to_string(),
            r.trial.to_string(),
            (r.set + 1).to_string(),
            fmt(r.truth),
            fmt(r.estimate),
            fmt(r.error),
            fmt(r.rho_max),
            fmt(r.rho_set),
            u8::from(r.covered).to_string(),
        ]);
    }
    t
}

pub fn cells_table(cells: &[LinearCell]) -> CsvTable {
    let mut t =
        CsvTable::new("linear_summary", &["K", "instances", "median_rho_max", "trials", "coverage", "coverage_floor"]);
    for c in cells {
        t.push(vec![
            c.k.to_string(),
            c.instances.to_string(),
            fmt(c.median_rho_max),
            c.trials.to_string(),
            fmt(c.coverage),
            fmt(c.coverage_floor),
        ]);
    }
    t
}
