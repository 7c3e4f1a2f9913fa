//! Inferring colors: a multi-hypothesis test deciding whether the true
//! parameter lies in the union of the blue sets or of the red sets.
//!
//! Each blue/red pair is solved as a pairwise test; the K-th powers of the
//! pairwise risks form a positive matrix `E`, whose leading singular pair
//! `(g, h)` fixes the detector shifts `ln(h_j / g_i)`. The resulting test
//! errs with probability at most the spectral norm of `E`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{enumerate_sequences, solve_pair_with, PairwiseTest, ParamRegion};
use crate::error::{Error, Result};
use crate::geometry::{dot, FwOptions};
use crate::obs::{Observation, Scheme, SchemeKind};

/// Floor applied to underflowing risk entries.
pub const RISK_FLOOR: f64 = 1e-300;
const MAX_POWER_ITERS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Color {
    Blue,
    Red,
}

/// Leading singular value and positive singular pair of an entrywise
/// positive matrix, normalized so `|g| = |h| = 1/sqrt(2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectral {
    pub sigma: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

fn mat_vec(e: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    e.iter().map(|row| dot(row, v)).collect()
}

fn mat_t_vec(e: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; e[0].len()];
    for (row, &vi) in e.iter().zip(v) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
    out
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Power iteration on `E^T E`, warm-started from repeated squaring so that
/// nearly tied singular values do not stall it.
pub fn pf_spectral(e: &[Vec<f64>]) -> Result<Spectral> {
    if e.is_empty() || e[0].is_empty() {
        return Err(Error::EmptyList);
    }
    let r = e[0].len();
    for (i, row) in e.iter().enumerate() {
        if row.len() != r {
            return Err(Error::DimensionMismatch { expected: r, got: row.len() });
        }
        for (j, &v) in row.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveEntry(i, j));
            }
        }
    }

    // Work on a rescaled copy so tiny entries do not underflow when squared.
    let scale = e.iter().flatten().copied().fold(0.0, f64::max);
    let es: Vec<Vec<f64>> = e.iter().map(|row| row.iter().map(|v| v / scale).collect()).collect();

    let mut gram = vec![vec![0.0; r]; r];
    for row in &es {
        for a in 0..r {
            for b in 0..r {
                gram[a][b] += row[a] * row[b];
            }
        }
    }
    for _ in 0..40 {
        let top = gram.iter().flatten().copied().fold(0.0, f64::max);
        if !(top > 0.0) {
            break;
        }
        let next: Vec<Vec<f64>> = (0..r)
            .map(|a| (0..r).map(|b| (0..r).map(|c| gram[a][c] * gram[c][b]).sum::<f64>() / (top * top)).collect())
            .collect();
        gram = next;
    }
    let mut h: Vec<f64> = (0..r).map(|b| (0..r).map(|a| gram[a][b]).sum::<f64>()).collect();
    if !(normalize(&mut h) > 0.0) || h.iter().any(|v| !v.is_finite()) {
        h = vec![1.0 / (r as f64).sqrt(); r];
    }

    let mut g = mat_vec(&es, &h);
    let mut sigma = normalize(&mut g);
    for _ in 0..MAX_POWER_ITERS {
        let mut hn = mat_t_vec(&es, &g);
        let s2 = normalize(&mut hn);
        let mut gn = mat_vec(&es, &hn);
        let s1 = normalize(&mut gn);
        let res_h = hn.iter().zip(&h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let res_g = gn.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        h = hn;
        g = gn;
        sigma = s1;
        if res_h.max(res_g) <= 1e-13 && (s1 - s2).abs() <= 1e-13 * s1 {
            break;
        }
    }

    let c = std::f64::consts::FRAC_1_SQRT_2;
    let fix = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| (x * c).max(f64::MIN_POSITIVE)).collect() };
    Ok(Spectral { sigma: sigma * scale, g: fix(g), h: fix(h) })
}

/// A compiled color test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorTest {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    /// `pairs[i][j]` tests blue set `i` against red set `j`.
    pub pairs: Vec<Vec<PairwiseTest>>,
    /// `E[i][j] = eps_star(i, j)^K`, floored at [`RISK_FLOOR`].
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    /// Spectral norm of `E`; bounds both error probabilities.
    pub eps_k: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// `shifts[i][j] = ln(h_j / g_i)`.
    pub shifts: Vec<Vec<f64>>,
}

/// Solves all blue/red pairs in parallel and assembles the test.
pub fn build_color_test(
    scheme: &Scheme,
    blues: &[ParamRegion],
    reds: &[ParamRegion],
    k: usize,
) -> Result<ColorTest> {
    build_color_test_with(scheme, blues, reds, k, &FwOptions::default())
}

pub fn build_color_test_with(
    scheme: &Scheme,
    blues: &[ParamRegion],
    reds: &[ParamRegion],
    k: usize,
    opts: &FwOptions,
) -> Result<ColorTest> {
    if blues.is_empty() || reds.is_empty() {
        return Err(Error::EmptyList);
    }
    let r = reds.len();
    let flat: Vec<PairwiseTest> = (0..blues.len() * r)
        .into_par_iter()
        .map(|idx| solve_pair_with(scheme, &blues[idx / r], &reds[idx % r], k, opts))
        .collect::<Result<_>>()?;
    let mut pairs = Vec::with_capacity(blues.len());
    let mut it = flat.into_iter();
    for _ in 0..blues.len() {
        pairs.push(it.by_ref().take(r).collect());
    }
    from_pairs(scheme, k, pairs)
}

/// Assembles a color test from already solved pairwise tests.
pub fn from_pairs(scheme: &Scheme, k: usize, pairs: Vec<Vec<PairwiseTest>>) -> Result<ColorTest> {
    let e: Vec<Vec<f64>> = pairs
        .iter()
        .map(|row| row.iter().map(|t| (k as f64 * t.opt).exp().max(RISK_FLOOR)).collect())
        .collect();
    let spec = pf_spectral(&e)?;
    let shifts = spec
        .g
        .iter()
        .map(|gi| spec.h.iter().map(|hj| (hj / gi).ln()).collect())
        .collect();
    Ok(ColorTest { scheme: *scheme, k, pairs, e, eps_k: spec.sigma, g: spec.g, h: spec.h, shifts })
}

impl ColorTest {
    /// Shifted K-fold detector values `phi_ij^(K)(omega^K) - alpha_ij`.
    pub fn detector_matrix(&self, obs: &Observation) -> Result<Vec<Vec<f64>>> {
        if obs.k() != self.k {
            return Err(Error::KMismatch { expected: self.k, got: obs.k() });
        }
        if obs.kind() != self.scheme.kind {
            return Err(Error::InvalidInput("observation does not match the scheme".into()));
        }
        let stats = obs.stats_for(self.scheme.dim);
        if stats.totals.len() != self.scheme.dim {
            return Err(Error::DimensionMismatch { expected: self.scheme.dim, got: stats.totals.len() });
        }
        Ok(self
            .pairs
            .iter()
            .zip(&self.shifts)
            .map(|(row, sh)| row.iter().zip(sh).map(|(t, a)| t.detector.eval_stats(&stats) - a).collect())
            .collect())
    }

    fn color_of(values: &[Vec<f64>]) -> Color {
        if values.iter().any(|row| row.iter().all(|&v| v >= 0.0)) {
            Color::Blue
        } else {
            Color::Red
        }
    }
}

/// Blue iff some row of the shifted detector matrix is entrywise
/// nonnegative.
pub fn infer_color(test: &ColorTest, obs: &Observation) -> Result<Color> {
    Ok(ColorTest::color_of(&test.detector_matrix(obs)?))
}

/// Exact probability that [`infer_color`] returns the wrong color at `mu`,
/// by enumerating every Discrete observation sequence.
pub fn exact_color_error_discrete(test: &ColorTest, mu: &[f64], truth: Color) -> Result<f64> {
    if test.scheme.kind != SchemeKind::Discrete {
        return Err(Error::InvalidInput("exact risk needs a Discrete scheme".into()));
    }
    test.scheme.check_param(mu)?;
    let tables: Vec<Vec<Vec<f64>>> = test
        .pairs
        .iter()
        .map(|row| row.iter().map(|t| t.detector.coef.iter().map(|c| c + t.detector.phi0).collect()).collect())
        .collect();
    let mut err = 0.0;
    let mut values: Vec<Vec<f64>> = test.shifts.clone();
    enumerate_sequences(mu, test.k, |p, seq| {
        for (i, row) in tables.iter().enumerate() {
            for (j, table) in row.iter().enumerate() {
                values[i][j] = seq.iter().map(|&s| table[s]).sum::<f64>() - test.shifts[i][j];
            }
        }
        if ColorTest::color_of(&values) != truth {
            err += p;
        }
    })?;
    Ok(err)
}
