//! Reproducible samplers on top of a ChaCha8 counter-based stream.
//!
//! Gaussian draws use Box-Muller on the uniform stream, Poisson draws use
//! inversion for rates up to 10 and Hörmann's PTRS transformed rejection
//! above, discrete draws use inversion of the cumulative table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

/// The generator used by every sampler in the crate.
pub type ObsRng = ChaCha8Rng;

/// Generator for `(seed, stream)`; independent streams share one seed.
pub fn rng_for(seed: u64, stream: u64) -> ObsRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[inline]
fn uniform_open(rng: &mut ObsRng) -> f64 {
    // (0, 1]
    1.0 - rng.gen::<f64>()
}

/// Fills `out` with independent standard normals.
pub(crate) fn standard_normals(rng: &mut ObsRng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let u1 = uniform_open(rng);
        let u2 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let t = std::f64::consts::TAU * u2;
        out[i] = r * t.cos();
        if i + 1 < out.len() {
            out[i + 1] = r * t.sin();
        }
        i += 2;
    }
}

pub(crate) fn poisson(rng: &mut ObsRng, mu: f64) -> u64 {
    if mu <= 10.0 {
        poisson_inversion(rng, mu)
    } else {
        poisson_ptrs(rng, mu)
    }
}

fn poisson_inversion(rng: &mut ObsRng, mu: f64) -> u64 {
    let u = rng.gen::<f64>();
    let mut p = (-mu).exp();
    let mut cdf = p;
    let mut k = 0u64;
    while u > cdf && k < 1000 {
        k += 1;
        p *= mu / k as f64;
        cdf += p;
    }
    k
}

fn poisson_ptrs(rng: &mut ObsRng, mu: f64) -> u64 {
    let smu = mu.sqrt();
    let b = 0.931 + 2.53 * smu;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    let log_mu = mu.ln();
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v = rng.gen::<f64>();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mu + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mu + k * log_mu - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Index drawn from the probability vector `p` (0-based).
pub(crate) fn categorical(rng: &mut ObsRng, cdf: &[f64]) -> usize {
    let u = rng.gen::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}
