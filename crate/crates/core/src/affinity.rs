//! Pairwise tests: maximize the log Hellinger affinity of two parameter
//! sets, build the balanced log-likelihood-ratio detector at the optimum,
//! and expose the risk bound `eps_star = exp(Opt)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    dot, fw_maximize, AffineMap, ConcaveObjective, FwOptions, LinearOracle, Polytope, ProductSet,
};
use crate::obs::{evaluate, Detector, Observation, Scheme, SchemeKind};

/// Lower bound required of every Discrete parameter on a set.
pub const DISCRETE_MU_MIN: f64 = 1e-6;

/// `log_affinity` for parameters already known to be in the domain.
pub(crate) fn log_affinity_unchecked(kind: SchemeKind, mu: &[f64], nu: &[f64]) -> f64 {
    match kind {
        SchemeKind::Gaussian => {
            -0.125 * mu.iter().zip(nu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        SchemeKind::Poisson => {
            -0.5 * mu
                .iter()
                .zip(nu)
                .map(|(a, b)| {
                    let d = a.sqrt() - b.sqrt();
                    d * d
                })
                .sum::<f64>()
        }
        SchemeKind::Discrete => mu.iter().zip(nu).map(|(a, b)| (a * b).sqrt()).sum::<f64>().ln(),
    }
}

/// `ln int sqrt(p_mu p_nu)`.
pub fn log_affinity(scheme: &Scheme, mu: &[f64], nu: &[f64]) -> Result<f64> {
    scheme.check_param(mu)?;
    scheme.check_param(nu)?;
    Ok(log_affinity_unchecked(scheme.kind, mu, nu))
}

/// Gradients of the log affinity w.r.t. `mu` and `nu`.
pub(crate) fn log_affinity_grad(
    kind: SchemeKind,
    mu: &[f64],
    nu: &[f64],
    g_mu: &mut [f64],
    g_nu: &mut [f64],
) {
    match kind {
        SchemeKind::Gaussian => {
            for i in 0..mu.len() {
                g_mu[i] = -0.25 * (mu[i] - nu[i]);
                g_nu[i] = -g_mu[i];
            }
        }
        SchemeKind::Poisson => {
            for i in 0..mu.len() {
                let r = (nu[i] / mu[i]).sqrt();
                g_mu[i] = -0.5 * (1.0 - r);
                g_nu[i] = -0.5 * (1.0 - 1.0 / r);
            }
        }
        SchemeKind::Discrete => {
            let s: f64 = mu.iter().zip(nu).map(|(a, b)| (a * b).sqrt()).sum();
            for i in 0..mu.len() {
                let r = (nu[i] / mu[i]).sqrt();
                g_mu[i] = 0.5 * r / s;
                g_nu[i] = 0.5 / (r * s);
            }
        }
    }
}

/// A parameter set given as the image `A(X)` of a polytope under an affine
/// map. Plain parameter polytopes use the identity map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRegion {
    pub set: Polytope,
    pub map: AffineMap,
}

impl ParamRegion {
    pub fn new(set: Polytope, map: AffineMap) -> Result<Self> {
        crate::error::check_dim(set.dim(), map.input_dim())?;
        Ok(Self { set, map })
    }

    pub fn direct(set: Polytope) -> Self {
        let map = AffineMap::identity(set.dim());
        Self { set, map }
    }

    /// Parameter-space dimension.
    pub fn param_dim(&self) -> usize {
        self.map.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.set.dim()
    }

    /// The single parameter of a singleton region.
    pub fn as_point(&self) -> Option<Vec<f64>> {
        self.set.as_point().map(|x| self.map.apply(x))
    }

    /// Verifies `A(X)` is nonempty and inside the parameter domain. Each
    /// coordinate's range is computed exactly by LP.
    pub fn check_in_domain(&self, scheme: &Scheme) -> Result<()> {
        if self.param_dim() != scheme.dim {
            return Err(Error::SetOutsideDomain(format!(
                "parameter dimension {} differs from scheme dimension {}",
                self.param_dim(),
                scheme.dim
            )));
        }
        if self.set.is_empty() {
            return Err(Error::SetOutsideDomain("set is empty".into()));
        }
        let floor = match scheme.kind {
            SchemeKind::Gaussian => return Ok(()),
            SchemeKind::Poisson => 0.0,
            SchemeKind::Discrete => DISCRETE_MU_MIN * (1.0 - 1e-9),
        };
        for (i, row) in self.map.matrix().iter().enumerate() {
            let (lo, _) = self.set.range_of(row, self.map.offset()[i])?;
            let ok = match scheme.kind {
                SchemeKind::Discrete => lo >= floor,
                _ => lo > floor,
            };
            if !ok {
                return Err(Error::SetOutsideDomain(format!(
                    "coordinate {i} reaches {lo:e}"
                )));
            }
        }
        if scheme.kind == SchemeKind::Discrete {
            let n = self.latent_dim();
            let mut w = vec![0.0; n];
            for row in self.map.matrix() {
                for (a, b) in w.iter_mut().zip(row) {
                    *a += b;
                }
            }
            let c: f64 = self.map.offset().iter().sum();
            let (lo, hi) = self.set.range_of(&w, c)?;
            if (lo - 1.0).abs() > 1e-9 || (hi - 1.0).abs() > 1e-9 {
                return Err(Error::SetOutsideDomain(format!(
                    "probabilities sum to values in [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// `scale * log_affinity(A1 x, A2 y) + offset` over the joint variable
/// `z = (x, y)`.
pub(crate) struct PairAffinity<'a> {
    pub kind: SchemeKind,
    pub first: &'a AffineMap,
    pub second: &'a AffineMap,
    pub scale: f64,
    pub offset: f64,
}

impl PairAffinity<'_> {
    fn params(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (x, y) = z.split_at(self.first.input_dim());
        (self.first.apply(x), self.second.apply(y))
    }
}

impl ConcaveObjective for PairAffinity<'_> {
    fn dim(&self) -> usize {
        self.first.input_dim() + self.second.input_dim()
    }

    fn value(&self, z: &[f64]) -> f64 {
        let (mu, nu) = self.params(z);
        self.scale * log_affinity_unchecked(self.kind, &mu, &nu) + self.offset
    }

    fn gradient(&self, z: &[f64], grad: &mut [f64]) {
        let (mu, nu) = self.params(z);
        let mut g_mu = vec![0.0; mu.len()];
        let mut g_nu = vec![0.0; nu.len()];
        log_affinity_grad(self.kind, &mu, &nu, &mut g_mu, &mut g_nu);
        for v in g_mu.iter_mut().chain(g_nu.iter_mut()) {
            *v *= self.scale;
        }
        let n1 = self.first.input_dim();
        let (gx, gy) = grad.split_at_mut(n1);
        gx.fill(0.0);
        gy.fill(0.0);
        self.first.add_transpose_apply(&g_mu, gx);
        self.second.add_transpose_apply(&g_nu, gy);
    }

    fn line_search(&self, z: &[f64], d: &[f64], max_step: f64) -> f64 {
        if self.kind != SchemeKind::Gaussian {
            return default_line_search(self, z, d, max_step);
        }
        // -scale/8 ||u + t w||^2 with u = mu - nu, w its derivative.
        let n1 = self.first.input_dim();
        let (mu, nu) = self.params(z);
        let w1 = self.first.apply_linear(&d[..n1]);
        let w2 = self.second.apply_linear(&d[n1..]);
        let u: Vec<f64> = mu.iter().zip(&nu).map(|(a, b)| a - b).collect();
        let w: Vec<f64> = w1.iter().zip(&w2).map(|(a, b)| a - b).collect();
        let ww = dot(&w, &w);
        if ww <= 0.0 {
            return 0.0;
        }
        (-dot(&u, &w) / ww).clamp(0.0, max_step)
    }
}

/// Trait default, reachable from an overriding impl.
fn default_line_search(obj: &dyn ConcaveObjective, x: &[f64], d: &[f64], max_step: f64) -> f64 {
    struct Plain<'b>(&'b dyn ConcaveObjective);
    impl ConcaveObjective for Plain<'_> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn value(&self, x: &[f64]) -> f64 {
            self.0.value(x)
        }
        fn gradient(&self, x: &[f64], g: &mut [f64]) {
            self.0.gradient(x, g)
        }
    }
    Plain(obj).line_search(x, d, max_step)
}

/// Largest relative Frank-Wolfe gap accepted when the iteration budget
/// runs out; the reported `opt` is then the upper bound `value + gap`.
pub const STALL_TOL: f64 = 1e-5;

/// Solution of the pairwise problem and its minimum-risk detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub scheme: Scheme,
    /// `1/2 ln(p_mu* / p_nu*)`, zero shift.
    pub detector: Detector,
    pub opt: f64,
    pub eps_star: f64,
    pub mu_star: Vec<f64>,
    pub nu_star: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
}

impl PairwiseTest {
    fn from_optimum(scheme: &Scheme, mu: Vec<f64>, nu: Vec<f64>, opt: f64, k: usize) -> Self {
        let opt = opt.min(0.0);
        PairwiseTest {
            scheme: *scheme,
            detector: scheme.log_ratio_unchecked(&mu, &nu),
            opt,
            eps_star: opt.exp(),
            mu_star: mu,
            nu_star: nu,
            k,
        }
    }

    /// Upper bound `eps_star^K` on both error probabilities.
    pub fn risk_bound(&self) -> f64 {
        (self.k as f64 * self.opt).exp()
    }
}

/// Solves `max log_affinity(mu, nu)` over `M1 x M2` with the default solver
/// options.
pub fn solve_pair(scheme: &Scheme, m1: &ParamRegion, m2: &ParamRegion, k: usize) -> Result<PairwiseTest> {
    solve_pair_with(scheme, m1, m2, k, &FwOptions::default())
}

pub fn solve_pair_with(
    scheme: &Scheme,
    m1: &ParamRegion,
    m2: &ParamRegion,
    k: usize,
    opts: &FwOptions,
) -> Result<PairwiseTest> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be at least 1".into()));
    }
    m1.check_in_domain(scheme)?;
    m2.check_in_domain(scheme)?;

    if let (Some(mu), Some(nu)) = (m1.as_point(), m2.as_point()) {
        let opt = log_affinity_unchecked(scheme.kind, &mu, &nu);
        return Ok(PairwiseTest::from_optimum(scheme, mu, nu, opt, k));
    }

    if let Some(mu) = common_point(m1, m2)? {
        return Ok(PairwiseTest::from_optimum(scheme, mu.clone(), mu, 0.0, k));
    }

    let obj = PairAffinity { kind: scheme.kind, first: &m1.map, second: &m2.map, scale: 1.0, offset: 0.0 };
    let oracle = ProductSet { first: &m1.set, second: &m2.set };
    // value + gap bounds the maximum from above, so a solve that stalls
    // slightly short of the tolerance still yields a valid risk bound.
    let (sol, opt) = match fw_maximize(&obj, &oracle as &dyn LinearOracle, opts) {
        Ok(sol) => {
            let opt = sol.value;
            (sol, opt)
        }
        Err(Error::IterationLimit { best }) if best.gap <= STALL_TOL * (1.0 + best.value.abs()) => {
            let opt = best.value + best.gap;
            (*best, opt)
        }
        Err(e) => return Err(e),
    };
    let (x, y) = sol.x.split_at(m1.latent_dim());
    let (mu, nu) = (m1.map.apply(x), m2.map.apply(y));
    Ok(PairwiseTest::from_optimum(scheme, mu, nu, opt, k))
}

/// A parameter in `A1(X1) ∩ A2(X2)`, if the images meet.
fn common_point(m1: &ParamRegion, m2: &ParamRegion) -> Result<Option<Vec<f64>>> {
    let n1 = m1.latent_dim();
    let n = n1 + m2.latent_dim();
    let mut joint = m1.set.product(&m2.set);
    let (a1, a2) = (m1.map.matrix(), m2.map.matrix());
    for r in 0..m1.param_dim() {
        let mut row = vec![0.0; n];
        row[..n1].copy_from_slice(&a1[r]);
        for (dst, v) in row[n1..].iter_mut().zip(&a2[r]) {
            *dst = -v;
        }
        joint = joint.with_equality(row, m2.map.offset()[r] - m1.map.offset()[r])?;
    }
    match joint.lp_minimize(&vec![0.0; n]) {
        Ok(sol) => Ok(Some(m1.map.apply(&sol.point[..n1]))),
        Err(Error::Infeasible) => Ok(None),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    AcceptH1,
    AcceptH2,
}

/// Accepts H1 iff the K-fold detector is nonnegative.
pub fn decide(test: &PairwiseTest, obs: &Observation) -> Result<Decision> {
    if obs.k() != test.k {
        return Err(Error::KMismatch { expected: test.k, got: obs.k() });
    }
    Ok(if evaluate(&test.detector, obs)? >= 0.0 {
        Decision::AcceptH1
    } else {
        Decision::AcceptH2
    })
}

/// Which hypothesis the evaluation point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    First,
    Second,
}

/// Largest alphabet power enumerated by the brute-force oracles.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Visits every `omega^K` in `{0..d}^K` with its probability under `mu`.
pub(crate) fn enumerate_sequences(mu: &[f64], k: usize, mut visit: impl FnMut(f64, &[usize])) -> Result<()> {
    let d = mu.len();
    let total = (d as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if total > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(total));
    }
    let mut digits = vec![0usize; k];
    loop {
        let p: f64 = digits.iter().map(|&s| mu[s]).product();
        visit(p, &digits);
        let mut pos = 0;
        loop {
            if pos == k {
                return Ok(());
            }
            digits[pos] += 1;
            if digits[pos] < d {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// As [`enumerate_sequences`], passing the K-fold value of `table`.
pub(crate) fn enumerate_discrete(mu: &[f64], table: &[f64], k: usize, mut visit: impl FnMut(f64, f64)) -> Result<()> {
    enumerate_sequences(mu, k, |p, seq| visit(p, seq.iter().map(|&s| table[s]).sum()))
}

fn discrete_table(test: &PairwiseTest, mu: &[f64]) -> Result<Vec<f64>> {
    if test.scheme.kind != SchemeKind::Discrete {
        return Err(Error::InvalidInput("exact risk needs a Discrete scheme".into()));
    }
    test.scheme.check_param(mu)?;
    let det = &test.detector;
    Ok(det.coef.iter().map(|c| c + det.phi0).collect())
}

/// `E_mu exp(-phi^(K))` (side First) or `E_mu exp(+phi^(K))` (side
/// Second), by enumerating the whole observation space.
pub fn exact_risk_discrete(test: &PairwiseTest, mu: &[f64], side: Side) -> Result<f64> {
    let table = discrete_table(test, mu)?;
    let sign = match side {
        Side::First => -1.0,
        Side::Second => 1.0,
    };
    let mut acc = 0.0;
    enumerate_discrete(mu, &table, test.k, |p, v| acc += p * (sign * v).exp())?;
    Ok(acc)
}

/// Exact probability that [`decide`] errs at `mu`: rejecting H1 when `mu`
/// is on the first side, accepting it when on the second.
pub fn exact_error_discrete(test: &PairwiseTest, mu: &[f64], side: Side) -> Result<f64> {
    let table = discrete_table(test, mu)?;
    let mut acc = 0.0;
    enumerate_discrete(mu, &table, test.k, |p, v| {
        let wrong = match side {
            Side::First => v < 0.0,
            Side::Second => v >= 0.0,
        };
        if wrong {
            acc += p;
        }
    })?;
    Ok(acc)
}
