//! Fast end-to-end checks run by `minimax selftest`.

use std::io::Write;

use minimax_core::linear::{opt_ij, LinearProblem, PairStatus};
use minimax_core::obs::Scheme;

use crate::boxplot::emit_boxplot;
use crate::config::{GaussianSingletonsConfig, HazardConfig, LinearConfig, HAZARD_KIND, LINEAR_KIND};
use crate::error::Result;
use crate::hazard::{self, run_hazard_experiment};
use crate::linear_exp::{self, gaussian_singleton_regions, run_linear_experiment};

pub fn tiny_linear_config(seed: u64) -> GaussianSingletonsConfig {
    GaussianSingletonsConfig {
        experiment: LINEAR_KIND.into(),
        n: 4,
        m: 3,
        num_sets: 2,
        epsilon: 0.05,
        k_grid: vec![1],
        instances: 2,
        trials: 50,
        seed,
        out: None,
    }
}

pub fn tiny_hazard_config(seed: u64) -> HazardConfig {
    HazardConfig {
        experiment: HAZARD_KIND.into(),
        m: 5,
        j: 2,
        thetas: vec![0.9],
        k_grid: vec![500],
        epsilon: 0.2,
        trials: 6,
        l: 2,
        kappa: None,
        seed,
        out: None,
    }
}

/// Generic `Opt_ij` against the closed-form case split on singletons.
fn closed_form_agrees() -> Result<bool> {
    let cfg = GaussianSingletonsConfig { num_sets: 4, ..tiny_linear_config(3) };
    let regions = gaussian_singleton_regions(&cfg, 0)?;
    let mut g = vec![0.0; cfg.n];
    g[0] = 1.0;
    let mut ok = true;
    for k in [1, 50] {
        let p = LinearProblem::new(Scheme::gaussian(cfg.m), k, regions.clone(), g.clone(), cfg.epsilon)?;
        let bound = 2.0 * (2.0 * p.theta() / k as f64).sqrt();
        for i in 0..p.num_sets() {
            for j in 0..p.num_sets() {
                let (xi, xj) = (regions[i].set.as_point().unwrap(), regions[j].set.as_point().unwrap());
                let (yi, yj) = (regions[i].map.apply(xi), regions[j].map.apply(xj));
                let dist = yi.iter().zip(&yj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let o = opt_ij(&p, i, j)?;
                ok &= if dist <= bound {
                    o.status == PairStatus::Feasible && (o.opt - 0.5 * (xj[0] - xi[0])).abs() <= 1e-5
                } else {
                    o.status == PairStatus::HellingerInfeasible
                };
            }
        }
    }
    Ok(ok)
}

fn linear_is_reproducible() -> Result<bool> {
    let cfg = LinearConfig::GaussianSingletons(tiny_linear_config(11));
    let a = run_linear_experiment(&cfg)?;
    let b = run_linear_experiment(&cfg)?;
    let ta = linear_exp::records_table(LINEAR_KIND, &a.records).to_bytes();
    let tb = linear_exp::records_table(LINEAR_KIND, &b.records).to_bytes();
    Ok(ta == tb && emit_boxplot(&ta, None, None).is_ok())
}

fn hazard_is_reproducible() -> Result<bool> {
    let cfg = tiny_hazard_config(12);
    let a = run_hazard_experiment(&cfg)?;
    let b = run_hazard_experiment(&cfg)?;
    let ta = hazard::records_table(&a.records).to_bytes();
    Ok(ta == hazard::records_table(&b.records).to_bytes() && emit_boxplot(&ta, None, None).is_ok())
}

/// Prints one line per check and returns the number of failures.
pub fn run_selftest(out: &mut dyn Write) -> Result<usize> {
    let checks: [(&str, fn() -> Result<bool>); 3] = [
        ("closed-form Opt_ij on Gaussian singletons", closed_form_agrees),
        ("linear runner reproducible", linear_is_reproducible),
        ("hazard runner reproducible", hazard_is_reproducible),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let ok = check()?;
        failed += usize::from(!ok);
        let _ = writeln!(out, "{} {name}", if ok { "PASS" } else { "FAIL" });
    }
    Ok(failed)
}
