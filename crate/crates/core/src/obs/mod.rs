//! Good observation schemes: Gaussian, Poisson and Discrete.
//!
//! Each scheme owns its parameter domain, densities, sampler, and the log
//! moment-generating function `Phi(phi; mu) = ln E_mu exp(phi(omega))` of an
//! affine (Gaussian/Poisson) or tabulated (Discrete) detector. Repeated
//! observations are handled implicitly: a K-sample observation is a plain
//! list of K points, and detectors sum over them.

mod sampling;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::geometry::dot;

pub use sampling::{rng_for, ObsRng};

/// Exponents above this magnitude are reported as [`Error::Overflow`].
pub const MAX_EXPONENT: f64 = 700.0;
/// Poisson detector coefficients are restricted to `|phi_i| <= 50`.
pub const POISSON_COEF_LIMIT: f64 = 50.0;
/// Minimal entry of a Discrete parameter vector.
pub const DISCRETE_MIN_PROB: f64 = 1e-12;
/// Tolerance on the unit-sum constraint of a Discrete parameter.
pub const DISCRETE_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Gaussian,
    Poisson,
    Discrete,
}

/// An observation scheme with ambient dimension `dim`.
///
/// Gaussian: `omega ~ N(mu, I_d)`, `mu` in `R^d`.
/// Poisson: independent `omega_i ~ Poisson(mu_i)`, `mu > 0`.
/// Discrete: `omega` in `{1..d}` with probabilities `mu > 0`, `sum mu = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scheme {
    pub kind: SchemeKind,
    pub dim: usize,
}

impl Scheme {
    pub fn gaussian(dim: usize) -> Self {
        Self { kind: SchemeKind::Gaussian, dim }
    }

    pub fn poisson(dim: usize) -> Self {
        Self { kind: SchemeKind::Poisson, dim }
    }

    pub fn discrete(dim: usize) -> Self {
        Self { kind: SchemeKind::Discrete, dim }
    }

    /// Accepts `mu` iff it lies in the parameter domain.
    pub fn check_param(&self, mu: &[f64]) -> Result<()> {
        if mu.len() != self.dim {
            return Err(Error::ParamOutOfDomain(format!(
                "expected dimension {}, got {}",
                self.dim,
                mu.len()
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::ParamOutOfDomain("non-finite entry".into()));
        }
        match self.kind {
            SchemeKind::Gaussian => Ok(()),
            SchemeKind::Poisson => {
                if mu.iter().all(|&v| v > 0.0) {
                    Ok(())
                } else {
                    Err(Error::ParamOutOfDomain("Poisson rates must be positive".into()))
                }
            }
            SchemeKind::Discrete => {
                if mu.iter().any(|&v| v < DISCRETE_MIN_PROB) {
                    return Err(Error::ParamOutOfDomain(
                        "Discrete probabilities must be positive".into(),
                    ));
                }
                let s: f64 = mu.iter().sum();
                if (s - 1.0).abs() > DISCRETE_SUM_TOL {
                    return Err(Error::ParamOutOfDomain(format!(
                        "Discrete probabilities sum to {s}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// `ln p_mu(omega)` w.r.t. Lebesgue (Gaussian) or counting measure.
    pub fn log_density(&self, mu: &[f64], omega: &SamplePoint) -> Result<f64> {
        self.check_param(mu)?;
        match (self.kind, omega) {
            (SchemeKind::Gaussian, SamplePoint::Real(w)) => {
                check_dim(self.dim, w.len())?;
                let sq: f64 = w.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok(-0.5 * self.dim as f64 * std::f64::consts::TAU.ln() - 0.5 * sq)
            }
            (SchemeKind::Poisson, SamplePoint::Counts(w)) => {
                check_dim(self.dim, w.len())?;
                Ok(w.iter()
                    .zip(mu)
                    .map(|(&k, &m)| k as f64 * m.ln() - m - ln_gamma(k as f64 + 1.0))
                    .sum())
            }
            (SchemeKind::Discrete, SamplePoint::Symbol(s)) => {
                if *s >= self.dim {
                    return Err(Error::InvalidInput(format!("symbol {} out of range", s + 1)));
                }
                Ok(mu[*s].ln())
            }
            _ => Err(Error::InvalidInput("sample does not match the scheme".into())),
        }
    }

    /// `K` independent draws from `p_mu`.
    pub fn sample(&self, mu: &[f64], rng: &mut ObsRng, k: usize) -> Result<Observation> {
        self.check_param(mu)?;
        if k == 0 {
            return Err(Error::InvalidInput("K must be at least 1".into()));
        }
        Ok(match self.kind {
            SchemeKind::Gaussian => {
                let mut noise = vec![0.0; self.dim * k];
                sampling::standard_normals(rng, &mut noise);
                Observation::Gaussian(
                    noise
                        .chunks(self.dim)
                        .map(|z| z.iter().zip(mu).map(|(a, b)| a + b).collect())
                        .collect(),
                )
            }
            SchemeKind::Poisson => Observation::Poisson(
                (0..k)
                    .map(|_| mu.iter().map(|&m| sampling::poisson(rng, m)).collect())
                    .collect(),
            ),
            SchemeKind::Discrete => {
                let mut acc = 0.0;
                let cdf: Vec<f64> = mu
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                Observation::Discrete((0..k).map(|_| sampling::categorical(rng, &cdf)).collect())
            }
        })
    }

    /// `Phi(phi; mu) = ln E_mu exp(phi(omega))` in closed form. The detector's
    /// shift is ignored.
    pub fn cumulant(&self, phi: &Detector, mu: &[f64]) -> Result<f64> {
        self.check_param(mu)?;
        self.check_detector(phi)?;
        self.cumulant_unchecked(phi, mu)
    }

    pub(crate) fn check_detector(&self, phi: &Detector) -> Result<()> {
        if phi.kind != self.kind {
            return Err(Error::InvalidInput("detector belongs to another scheme".into()));
        }
        check_dim(self.dim, phi.coef.len())?;
        let limit = match self.kind {
            SchemeKind::Gaussian => return Ok(()),
            SchemeKind::Poisson => POISSON_COEF_LIMIT,
            SchemeKind::Discrete => MAX_EXPONENT,
        };
        for &c in &phi.coef {
            if !(c.abs() <= limit) {
                return Err(Error::Overflow(c));
            }
        }
        Ok(())
    }

    /// Closed form without domain checks; used inside optimization loops
    /// whose iterates stay in the domain by construction.
    pub(crate) fn cumulant_unchecked(&self, phi: &Detector, mu: &[f64]) -> Result<f64> {
        let c = &phi.coef;
        Ok(match self.kind {
            SchemeKind::Gaussian => phi.phi0 + dot(c, mu) + 0.5 * dot(c, c),
            SchemeKind::Poisson => {
                phi.phi0 + c.iter().zip(mu).map(|(a, m)| m * a.exp_m1()).sum::<f64>()
            }
            SchemeKind::Discrete => {
                let top = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let s: f64 = c.iter().zip(mu).map(|(a, m)| m * (a - top).exp()).sum();
                phi.phi0 + top + s.ln()
            }
        })
    }

    /// Gradient of `mu -> Phi(phi; mu)`, written into `out`.
    pub(crate) fn cumulant_grad_mu(&self, phi: &Detector, mu: &[f64], out: &mut [f64]) {
        let c = &phi.coef;
        match self.kind {
            SchemeKind::Gaussian => out.copy_from_slice(c),
            SchemeKind::Poisson => {
                for (o, a) in out.iter_mut().zip(c) {
                    *o = a.exp_m1();
                }
            }
            SchemeKind::Discrete => {
                let top = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for (o, a) in out.iter_mut().zip(c) {
                    *o = (a - top).exp();
                }
                for (o, m) in out.iter().zip(mu) {
                    s += o * m;
                }
                for o in out.iter_mut() {
                    *o /= s;
                }
            }
        }
    }

    /// The detector `1/2 ln(p_mu / p_nu)`.
    pub fn log_ratio_detector(&self, mu: &[f64], nu: &[f64]) -> Result<Detector> {
        self.check_param(mu)?;
        self.check_param(nu)?;
        Ok(self.log_ratio_unchecked(mu, nu))
    }

    pub(crate) fn log_ratio_unchecked(&self, mu: &[f64], nu: &[f64]) -> Detector {
        match self.kind {
            SchemeKind::Gaussian => Detector {
                kind: self.kind,
                phi0: 0.25 * (dot(nu, nu) - dot(mu, mu)),
                coef: mu.iter().zip(nu).map(|(a, b)| 0.5 * (a - b)).collect(),
                shift: 0.0,
            },
            SchemeKind::Poisson => Detector {
                kind: self.kind,
                phi0: 0.5 * nu.iter().zip(mu).map(|(n, m)| n - m).sum::<f64>(),
                coef: mu.iter().zip(nu).map(|(a, b)| 0.5 * (a / b).ln()).collect(),
                shift: 0.0,
            },
            SchemeKind::Discrete => Detector {
                kind: self.kind,
                phi0: 0.0,
                coef: mu.iter().zip(nu).map(|(a, b)| 0.5 * (a / b).ln()).collect(),
                shift: 0.0,
            },
        }
    }

    pub fn zero_detector(&self) -> Detector {
        Detector { kind: self.kind, phi0: 0.0, coef: vec![0.0; self.dim], shift: 0.0 }
    }
}

/// A member of the detector space plus an additive shift.
///
/// Gaussian/Poisson: `phi(omega) = phi0 + coef^T omega`.
/// Discrete: `phi(omega) = phi0 + coef[omega]`.
/// On a K-sample observation the detector evaluates to
/// `sum_t phi(omega_t) - shift`.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub kind: SchemeKind,
    pub phi0: f64,
    pub coef: Vec<f64>,
    pub shift: f64,
}

impl Detector {
    /// `s * phi` (shift untouched).
    pub fn scaled(&self, s: f64) -> Detector {
        Detector {
            kind: self.kind,
            phi0: s * self.phi0,
            coef: self.coef.iter().map(|c| s * c).collect(),
            shift: self.shift,
        }
    }

    pub fn with_shift(mut self, shift: f64) -> Detector {
        self.shift = shift;
        self
    }

    /// Value at a single point, without the shift.
    pub fn value_at(&self, omega: &SamplePoint) -> f64 {
        match omega {
            SamplePoint::Real(w) => self.phi0 + dot(&self.coef, w),
            SamplePoint::Counts(w) => {
                self.phi0 + self.coef.iter().zip(w).map(|(c, &k)| c * k as f64).sum::<f64>()
            }
            SamplePoint::Symbol(s) => self.phi0 + self.coef[*s],
        }
    }

    /// `sum_t phi(omega_t) - shift` from sufficient statistics.
    pub fn eval_stats(&self, stats: &SufficientStats) -> f64 {
        stats.k as f64 * self.phi0 + dot(&self.coef, &stats.totals) - self.shift
    }
}

/// `sum_t phi(omega_t) - shift`.
pub fn evaluate(det: &Detector, obs: &Observation) -> Result<f64> {
    let stats = obs.stats_for(det.coef.len());
    check_dim(det.coef.len(), stats.totals.len())?;
    Ok(det.eval_stats(&stats))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum DetectorJson {
    Gaussian { phi0: f64, phi: Vec<f64>, shift: f64 },
    Poisson { phi0: f64, phi: Vec<f64>, shift: f64 },
    Discrete { table: Vec<f64>, shift: f64 },
}

impl Serialize for Detector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let j = match self.kind {
            SchemeKind::Gaussian => {
                DetectorJson::Gaussian { phi0: self.phi0, phi: self.coef.clone(), shift: self.shift }
            }
            SchemeKind::Poisson => {
                DetectorJson::Poisson { phi0: self.phi0, phi: self.coef.clone(), shift: self.shift }
            }
            SchemeKind::Discrete => DetectorJson::Discrete {
                table: self.coef.iter().map(|c| c + self.phi0).collect(),
                shift: self.shift,
            },
        };
        j.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Detector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match DetectorJson::deserialize(d)? {
            DetectorJson::Gaussian { phi0, phi, shift } => {
                Detector { kind: SchemeKind::Gaussian, phi0, coef: phi, shift }
            }
            DetectorJson::Poisson { phi0, phi, shift } => {
                Detector { kind: SchemeKind::Poisson, phi0, coef: phi, shift }
            }
            DetectorJson::Discrete { table, shift } => {
                Detector { kind: SchemeKind::Discrete, phi0: 0.0, coef: table, shift }
            }
        })
    }
}

/// One point of the observation space. Discrete symbols are 0-based here
/// and 1-based in JSON.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplePoint {
    Real(Vec<f64>),
    Counts(Vec<u64>),
    Symbol(usize),
}

/// A stationary K-repeated observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObservationJson", into = "ObservationJson")]
pub enum Observation {
    Gaussian(Vec<Vec<f64>>),
    Poisson(Vec<Vec<u64>>),
    /// 0-based symbols.
    Discrete(Vec<usize>),
}

/// Sums of samples (Gaussian/Poisson) or symbol counts (Discrete); every
/// detector is linear in these.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub k: usize,
    pub totals: Vec<f64>,
}

impl Observation {
    pub fn k(&self) -> usize {
        match self {
            Observation::Gaussian(v) => v.len(),
            Observation::Poisson(v) => v.len(),
            Observation::Discrete(v) => v.len(),
        }
    }

    pub fn kind(&self) -> SchemeKind {
        match self {
            Observation::Gaussian(_) => SchemeKind::Gaussian,
            Observation::Poisson(_) => SchemeKind::Poisson,
            Observation::Discrete(_) => SchemeKind::Discrete,
        }
    }

    pub fn point(&self, t: usize) -> SamplePoint {
        match self {
            Observation::Gaussian(v) => SamplePoint::Real(v[t].clone()),
            Observation::Poisson(v) => SamplePoint::Counts(v[t].clone()),
            Observation::Discrete(v) => SamplePoint::Symbol(v[t]),
        }
    }

    /// Sufficient statistics; Discrete histograms need the alphabet size,
    /// taken as one past the largest symbol seen unless `stats_for` is used.
    pub fn stats(&self) -> SufficientStats {
        match self {
            Observation::Discrete(v) => {
                let d = v.iter().copied().max().map_or(0, |m| m + 1);
                self.stats_for(d)
            }
            _ => self.stats_for(0),
        }
    }

    pub fn stats_for(&self, dim: usize) -> SufficientStats {
        match self {
            Observation::Gaussian(v) => {
                let d = v.first().map_or(dim, Vec::len);
                let mut totals = vec![0.0; d];
                for w in v {
                    for (t, x) in totals.iter_mut().zip(w) {
                        *t += x;
                    }
                }
                SufficientStats { k: v.len(), totals }
            }
            Observation::Poisson(v) => {
                let d = v.first().map_or(dim, Vec::len);
                let mut totals = vec![0.0; d];
                for w in v {
                    for (t, x) in totals.iter_mut().zip(w) {
                        *t += *x as f64;
                    }
                }
                SufficientStats { k: v.len(), totals }
            }
            Observation::Discrete(v) => {
                let d = dim.max(v.iter().copied().max().map_or(0, |m| m + 1));
                let mut totals = vec![0.0; d];
                for &s in v {
                    totals[s] += 1.0;
                }
                SufficientStats { k: v.len(), totals }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "samples", rename_all = "lowercase")]
enum ObservationJson {
    Gaussian(Vec<Vec<f64>>),
    Poisson(Vec<Vec<u64>>),
    Discrete(Vec<usize>),
}

impl TryFrom<ObservationJson> for Observation {
    type Error = Error;

    fn try_from(j: ObservationJson) -> Result<Self> {
        Ok(match j {
            ObservationJson::Gaussian(v) => Observation::Gaussian(v),
            ObservationJson::Poisson(v) => Observation::Poisson(v),
            ObservationJson::Discrete(v) => {
                if v.iter().any(|&s| s == 0) {
                    return Err(Error::InvalidInput("discrete symbols are 1-based".into()));
                }
                Observation::Discrete(v.into_iter().map(|s| s - 1).collect())
            }
        })
    }
}

impl From<Observation> for ObservationJson {
    fn from(o: Observation) -> Self {
        match o {
            Observation::Gaussian(v) => ObservationJson::Gaussian(v),
            Observation::Poisson(v) => ObservationJson::Poisson(v),
            Observation::Discrete(v) => ObservationJson::Discrete(v.into_iter().map(|s| s + 1).collect()),
        }
    }
}
