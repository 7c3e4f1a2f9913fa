//! Bisection estimate of an N-convex functional `f(x)`.
//!
//! Each step halves the current localizer `[a, b]` after two color tests
//! decide whether `f(x)` lies left or right of the midpoint `c`. The right
//! test separates `{f >= v}` from `{f <= c}`, the left test `{f >= c}` from
//! `{f <= u}`, where `v` and `u` are pushed towards `c` as long as the test
//! risk stays below `delta`. When the two tests disagree, `f(x)` is in
//! `[u, v]` and the procedure stops.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::affinity::ParamRegion;
use crate::color::{build_color_test_with, infer_color, Color, ColorTest};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{AffineMap, FwOptions, Polytope};
use crate::nconvex::{Expr, NConvexFunction};
use crate::obs::{Observation, Scheme};

/// Bisection steps used to bound a linear-fractional function.
const RATIO_BISECTION_STEPS: usize = 40;

/// Estimate `f(x)` from observations of `A(x)`, `x` in `X_1 u ... u X_I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalProblem {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    /// `X_1, ..., X_I`, each contained in the domain of `f`.
    pub sets: Vec<Polytope>,
    pub map: AffineMap,
    pub f: NConvexFunction,
    pub epsilon: f64,
}

impl FunctionalProblem {
    /// Checks dimensions, that every `X_i` is nonempty and inside the domain
    /// of `f`, and that `A` maps the domain into the parameter space.
    pub fn new(
        scheme: Scheme,
        k: usize,
        sets: Vec<Polytope>,
        map: AffineMap,
        f: NConvexFunction,
        epsilon: f64,
    ) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptyList);
        }
        if k == 0 {
            return Err(Error::InvalidInput("K must be at least 1".into()));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::EpsilonOutOfRange(epsilon));
        }
        let n = f.domain().dim();
        check_dim(n, map.input_dim())?;
        ParamRegion::new(f.domain().clone(), map.clone())?.check_in_domain(&scheme)?;
        for (i, s) in sets.iter().enumerate() {
            check_dim(n, s.dim())?;
            if s.is_empty() {
                return Err(Error::InvalidInput(format!("set X_{} is empty", i + 1)));
            }
            if !contained_in(s, f.domain())? {
                return Err(Error::InvalidInput(format!("set X_{} is not inside the domain of f", i + 1)));
            }
        }
        Ok(Self { scheme, k, sets, map, f, epsilon })
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    /// Nonempty sets `X_i ∩ {f >= a}` piece by piece. Empty iff `a` is
    /// upper-infeasible.
    pub fn upper_sets(&self, a: f64) -> Result<Vec<Polytope>> {
        self.cut(&self.f.level_geq(a)?)
    }

    /// Nonempty sets `X_i ∩ {f <= a}`. Empty iff `a` is lower-infeasible.
    pub fn lower_sets(&self, a: f64) -> Result<Vec<Polytope>> {
        self.cut(&self.f.level_leq(a)?)
    }

    fn cut(&self, pieces: &[Polytope]) -> Result<Vec<Polytope>> {
        let mut out = Vec::new();
        for x in &self.sets {
            for p in pieces {
                let z = x.intersect(p)?;
                if !z.is_empty() {
                    out.push(z);
                }
            }
        }
        Ok(out)
    }

    /// Valid bounds `a0 <= min f` and `b0 >= max f` over `X`. Exact for
    /// affine and linear-fractional pieces, interval arithmetic through the
    /// combinators.
    pub fn value_range(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in &self.sets {
            let p = x.intersect(self.f.domain())?;
            let (l, h) = expr_bounds(self.f.expr(), &p)?;
            lo = lo.min(l);
            hi = hi.max(h);
        }
        Ok((lo, hi))
    }

    fn regions(&self, sets: &[Polytope]) -> Vec<ParamRegion> {
        sets.iter()
            .map(|s| ParamRegion { set: s.clone(), map: self.map.clone() })
            .collect()
    }
}

/// `inner ⊆ outer`, checked constraint by constraint with LPs over `inner`.
fn contained_in(inner: &Polytope, outer: &Polytope) -> Result<bool> {
    let tol = 1e-7;
    let (a, b) = outer.inequalities();
    for (row, rhs) in a.iter().zip(b) {
        if inner.range_of(row, 0.0)?.1 > rhs + tol * (1.0 + rhs.abs()) {
            return Ok(false);
        }
    }
    let (c, d) = outer.equalities();
    for (row, rhs) in c.iter().zip(d) {
        let (l, h) = inner.range_of(row, 0.0)?;
        if l < rhs - tol * (1.0 + rhs.abs()) || h > rhs + tol * (1.0 + rhs.abs()) {
            return Ok(false);
        }
    }
    let (lo, hi) = outer.bounds();
    let mut e = vec![0.0; inner.dim()];
    for i in 0..inner.dim() {
        if lo[i].is_finite() || hi[i].is_finite() {
            e[i] = 1.0;
            let (l, h) = inner.range_of(&e, 0.0)?;
            e[i] = 0.0;
            if l < lo[i] - tol * (1.0 + lo[i].abs()) || h > hi[i] + tol * (1.0 + hi[i].abs()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn expr_bounds(e: &Expr, p: &Polytope) -> Result<(f64, f64)> {
    match e {
        Expr::Affine { g, c } => p.range_of(g, *c),
        Expr::LinearFractional { g, g0, h, h0 } => ratio_bounds(p, g, *g0, h, *h0),
        Expr::Neg { arg } => {
            let (l, h) = expr_bounds(arg, p)?;
            Ok((-h, -l))
        }
        Expr::Max { args } | Expr::Min { args } => {
            let is_max = matches!(e, Expr::Max { .. });
            let mut out: Option<(f64, f64)> = None;
            for a in args {
                let (l, h) = expr_bounds(a, p)?;
                out = Some(match out {
                    None => (l, h),
                    Some((ol, oh)) if is_max => (ol.max(l), oh.max(h)),
                    Some((ol, oh)) => (ol.min(l), oh.min(h)),
                });
            }
            out.ok_or(Error::EmptyList)
        }
        Expr::ConditionalQuantile { s, .. } => {
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok((lo, hi))
        }
    }
}

/// Bounds on `(g^T x + g0) / (h^T x + h0)` over `p`. The corner ratios of
/// the numerator/denominator box give a bracket; bisection on the level `t`
/// with the sign of `max/min (num - t den)` then tightens it from outside.
fn ratio_bounds(p: &Polytope, g: &[f64], g0: f64, h: &[f64], h0: f64) -> Result<(f64, f64)> {
    let (nl, nh) = p.range_of(g, g0)?;
    let (dl, dh) = p.range_of(h, h0)?;
    if dl <= 0.0 {
        return Err(Error::DenominatorNotPositive(dl));
    }
    let corners = [nl / dl, nl / dh, nh / dl, nh / dh];
    let lo0 = corners.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let level = |t: f64| -> Vec<f64> { g.iter().zip(h).map(|(a, b)| a - t * b).collect() };

    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..RATIO_BISECTION_STEPS {
        let t = 0.5 * (lo + hi);
        let (_, top) = p.range_of(&level(t), g0 - t * h0)?;
        if top >= 0.0 {
            lo = t;
        } else {
            hi = t;
        }
    }
    let upper = hi;

    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..RATIO_BISECTION_STEPS {
        let t = 0.5 * (lo + hi);
        let (bottom, _) = p.range_of(&level(t), g0 - t * h0)?;
        if bottom <= 0.0 {
            hi = t;
        } else {
            lo = t;
        }
    }
    Ok((lo, upper))
}

/// Outcome of a left or right test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Left,
    Right,
}

/// Which of the two segment tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestSide {
    Left,
    Right,
}

/// How a segment test decides.
#[derive(Debug, Clone, PartialEq)]
pub enum SegmentRule {
    /// One of the hypotheses is empty.
    Constant(Verdict),
    /// `right` iff the color test says blue; blue sets are `{f >= b}`.
    Color(Arc<ColorTest>),
}

/// A compiled left or right test for a segment `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentTest {
    pub a: f64,
    pub b: f64,
    pub side: TestSide,
    pub rule: SegmentRule,
    /// Risk bound; zero exactly for constant verdicts.
    pub sigma: f64,
}

impl SegmentTest {
    pub fn verdict(&self, obs: &Observation) -> Result<Verdict> {
        match &self.rule {
            SegmentRule::Constant(v) => Ok(*v),
            SegmentRule::Color(t) => Ok(match infer_color(t, obs)? {
                Color::Blue => Verdict::Right,
                Color::Red => Verdict::Left,
            }),
        }
    }
}

/// What the recurrence needs from a family of segment tests. Implemented by
/// [`BisectionEstimator`] and by stubs in tests.
pub trait SegmentOracle {
    type Obs: ?Sized;

    fn upper_feasible(&self, a: f64) -> Result<bool>;
    fn lower_feasible(&self, a: f64) -> Result<bool>;
    /// Risk of the `side` test on `[a, b]`; the side's feasibility
    /// precondition is assumed.
    fn sigma(&self, a: f64, b: f64, side: TestSide) -> Result<f64>;
    fn verdict(&self, a: f64, b: f64, side: TestSide, obs: &Self::Obs) -> Result<Verdict>;
}

/// `[a, b]` is delta-good on `side`: the side's endpoint is feasible,
/// `b > a` and the test risk is at most `delta`.
pub fn is_delta_good<O: SegmentOracle + ?Sized>(o: &O, a: f64, b: f64, side: TestSide, delta: f64) -> Result<bool> {
    if !(b > a) {
        return Ok(false);
    }
    let feasible = match side {
        TestSide::Right => o.lower_feasible(a)?,
        TestSide::Left => o.upper_feasible(b)?,
    };
    Ok(feasible && o.sigma(a, b, side)? <= delta)
}

/// Moves the far endpoint towards `fixed` in steps of `kappa` until the
/// segment stops being delta-good, and returns the last good endpoint.
/// For the right side the segment is `[fixed, far - k kappa]`, for the left
/// side `[far + k kappa, fixed]`.
pub fn kappa_maximal<O: SegmentOracle + ?Sized>(
    o: &O,
    side: TestSide,
    fixed: f64,
    far: f64,
    delta: f64,
    kappa: f64,
) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidInput(format!("kappa must be positive, got {kappa}")));
    }
    let candidate = |k: usize| match side {
        TestSide::Right => far - k as f64 * kappa,
        TestSide::Left => far + k as f64 * kappa,
    };
    let good = |e: f64| match side {
        TestSide::Right => is_delta_good(o, fixed, e, side, delta),
        TestSide::Left => is_delta_good(o, e, fixed, side, delta),
    };
    if !good(far)? {
        return Err(Error::InvalidInput("the full segment is not delta-good".into()));
    }
    let mut k = 1;
    loop {
        if !good(candidate(k))? {
            return Ok(candidate(k - 1));
        }
        k += 1;
    }
}

/// How a single bisection step ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    /// Midpoint upper-infeasible, keep the left half.
    UpperInfeasible,
    /// Midpoint lower-infeasible, keep the right half.
    LowerInfeasible,
    RightNotGood,
    LeftNotGood,
    ConsensusRight,
    ConsensusLeft,
    Disagreement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Disagreement,
    NotGood,
    MaxSteps,
    /// The last step ended by dropping an infeasible half.
    InfeasibilityShrink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub c: f64,
    pub u: Option<f64>,
    pub v: Option<f64>,
    pub sigma_right: Option<f64>,
    pub sigma_left: Option<f64>,
    pub right_verdict: Option<Verdict>,
    pub left_verdict: Option<Verdict>,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionTrace {
    /// `Delta_0, Delta_1, ...`, nested.
    pub localizers: Vec<[f64; 2]>,
    pub steps: Vec<StepRecord>,
    pub termination: Termination,
    pub output: [f64; 2],
    pub estimate: f64,
}

impl BisectionTrace {
    fn finish(localizers: Vec<[f64; 2]>, steps: Vec<StepRecord>, termination: Termination, output: [f64; 2]) -> Self {
        let estimate = 0.5 * (output[0] + output[1]);
        Self { localizers, steps, termination, output, estimate }
    }
}

/// Widens `[a0, b0]` outward to endpoints on a binary grid fine enough
/// (about `2^(l-51)` relative) that `l` midpoint halvings are exact in
/// floating point, so every localizer has width exactly `(b0 - a0) / 2^k`.
pub fn dyadic_bounds(a0: f64, b0: f64, l: usize) -> Result<(f64, f64)> {
    if !(a0 < b0) || !a0.is_finite() || !b0.is_finite() {
        return Err(Error::InvalidInput(format!("need finite a0 < b0, got [{a0}, {b0}]")));
    }
    if l > 40 {
        return Err(Error::InvalidInput(format!("at most 40 halvings are supported, got {l}")));
    }
    let m = a0.abs().max(b0.abs()).max(b0 - a0);
    let step = 2f64.powi(m.log2().ceil() as i32 - 51 + l as i32);
    Ok(((a0 / step).floor() * step, (b0 / step).ceil() * step))
}

/// Runs at most `l` bisection steps on `[a0, b0]` with one fixed
/// observation.
pub fn bisect<O: SegmentOracle + ?Sized>(
    o: &O,
    obs: &O::Obs,
    l: usize,
    delta: f64,
    kappa: f64,
    a0: f64,
    b0: f64,
) -> Result<BisectionTrace> {
    if !(a0 < b0) {
        return Err(Error::InvalidInput(format!("need a0 < b0, got [{a0}, {b0}]")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let mut localizers = vec![[a0, b0]];
    let mut steps = Vec::new();
    let (mut a, mut b) = (a0, b0);
    let mut last_shrink = false;

    for _ in 0..l {
        let c = 0.5 * (a + b);
        let mut rec = StepRecord {
            c,
            u: None,
            v: None,
            sigma_right: None,
            sigma_left: None,
            right_verdict: None,
            left_verdict: None,
            outcome: StepOutcome::Disagreement,
        };
        let up = o.upper_feasible(c)?;
        let low = o.lower_feasible(c)?;
        if !up && !low {
            return Err(Error::BothSidesInfeasible(c));
        }
        if !up || !low {
            if !up {
                b = c;
                rec.outcome = StepOutcome::UpperInfeasible;
            } else {
                a = c;
                rec.outcome = StepOutcome::LowerInfeasible;
            }
            steps.push(rec);
            localizers.push([a, b]);
            last_shrink = true;
            continue;
        }
        last_shrink = false;

        if !is_delta_good(o, c, b, TestSide::Right, delta)? {
            rec.outcome = StepOutcome::RightNotGood;
            steps.push(rec);
            return Ok(BisectionTrace::finish(localizers, steps, Termination::NotGood, [a, b]));
        }
        let v = kappa_maximal(o, TestSide::Right, c, b, delta, kappa)?;
        rec.v = Some(v);
        rec.sigma_right = Some(o.sigma(c, v, TestSide::Right)?);

        if !is_delta_good(o, a, c, TestSide::Left, delta)? {
            rec.outcome = StepOutcome::LeftNotGood;
            steps.push(rec);
            return Ok(BisectionTrace::finish(localizers, steps, Termination::NotGood, [a, b]));
        }
        let u = kappa_maximal(o, TestSide::Left, c, a, delta, kappa)?;
        rec.u = Some(u);
        rec.sigma_left = Some(o.sigma(u, c, TestSide::Left)?);

        let right = o.verdict(c, v, TestSide::Right, obs)?;
        let left = o.verdict(u, c, TestSide::Left, obs)?;
        rec.right_verdict = Some(right);
        rec.left_verdict = Some(left);
        if right != left {
            rec.outcome = StepOutcome::Disagreement;
            steps.push(rec);
            return Ok(BisectionTrace::finish(localizers, steps, Termination::Disagreement, [u, v]));
        }
        if right == Verdict::Right {
            a = c;
            rec.outcome = StepOutcome::ConsensusRight;
        } else {
            b = c;
            rec.outcome = StepOutcome::ConsensusLeft;
        }
        steps.push(rec);
        localizers.push([a, b]);
    }
    let reason = if last_shrink { Termination::InfeasibilityShrink } else { Termination::MaxSteps };
    Ok(BisectionTrace::finish(localizers, steps, reason, [a, b]))
}

/// Control parameters of the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BisectionParams {
    #[serde(rename = "L")]
    pub l: usize,
    pub delta: f64,
    pub kappa: f64,
    #[serde(rename = "K")]
    pub k: usize,
}

/// Parameters making the estimate `(rho, eps)`-reliable given that some
/// `(rho_bar, eps)`-reliable estimate uses `k_bar` observations:
/// `L = ceil(log2((b0 - a0) / (2 rho)))`, `delta = eps / (2L)`,
/// `kappa = rho - 2 rho_bar` and
/// `K = ceil(2 ln(2LNI/eps) / ln(1/(4 eps (1-eps))) * k_bar)`.
#[allow(clippy::too_many_arguments)]
pub fn choose_params(
    rho: f64,
    rho_bar: f64,
    epsilon: f64,
    a0: f64,
    b0: f64,
    k_bar: usize,
    n: usize,
    i: usize,
    l_override: Option<usize>,
) -> Result<BisectionParams> {
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if !(a0 < b0) {
        return Err(Error::InvalidInput(format!("need a0 < b0, got [{a0}, {b0}]")));
    }
    if !(rho_bar >= 0.0 && rho > 2.0 * rho_bar) {
        return Err(Error::InvalidInput(format!("need rho > 2 rho_bar >= 0, got rho = {rho}, rho_bar = {rho_bar}")));
    }
    if n == 0 || i == 0 || k_bar == 0 {
        return Err(Error::InvalidInput("N, I and K_bar must be positive".into()));
    }
    if b0 - a0 <= 2.0 * rho {
        return Err(Error::TrivialProblem { estimate: 0.5 * (a0 + b0) });
    }
    let l = match l_override {
        Some(0) => return Err(Error::InvalidInput("L must be at least 1".into())),
        Some(l) => l,
        None => {
            let ratio = (b0 - a0) / (2.0 * rho);
            let mut l = 0;
            while 2f64.powi(l as i32) < ratio {
                l += 1;
            }
            l
        }
    };
    let delta = epsilon / (2.0 * l as f64);
    let factor = 2.0 * (2.0 * (l * n * i) as f64 / epsilon).ln() / (1.0 / (4.0 * epsilon * (1.0 - epsilon))).ln();
    let k = (factor * k_bar as f64).ceil() as usize;
    Ok(BisectionParams { l, delta, kappa: rho - 2.0 * rho_bar, k })
}

type Cell<T> = Arc<OnceLock<Result<Arc<T>>>>;

/// Memo table whose entries are computed once even under concurrent use.
struct Memo<K, T> {
    map: Mutex<HashMap<K, Cell<T>>>,
}

impl<K: std::hash::Hash + Eq, T> Memo<K, T> {
    fn new() -> Self {
        Self { map: Mutex::new(HashMap::new()) }
    }

    fn get(&self, key: K, make: impl FnOnce() -> Result<T>) -> Result<Arc<T>> {
        let cell = {
            let mut m = self.map.lock().unwrap_or_else(|e| e.into_inner());
            m.entry(key).or_default().clone()
        };
        cell.get_or_init(|| make().map(Arc::new)).clone()
    }

    fn len(&self) -> usize {
        self.map.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

/// The bisection estimate for a [`FunctionalProblem`]. Level sets and color
/// tests are memoized by segment, so repeated runs on fresh observations
/// reuse all the optimization work.
pub struct BisectionEstimator {
    problem: FunctionalProblem,
    opts: FwOptions,
    levels: Memo<(u64, bool), Vec<Polytope>>,
    tests: Memo<(u64, u64), ColorTest>,
}

impl BisectionEstimator {
    pub fn new(problem: FunctionalProblem) -> Self {
        Self::with_options(problem, FwOptions::default())
    }

    pub fn with_options(problem: FunctionalProblem, opts: FwOptions) -> Self {
        Self { problem, opts, levels: Memo::new(), tests: Memo::new() }
    }

    pub fn problem(&self) -> &FunctionalProblem {
        &self.problem
    }

    /// Number of distinct color tests compiled so far.
    pub fn cached_tests(&self) -> usize {
        self.tests.len()
    }

    fn upper(&self, a: f64) -> Result<Arc<Vec<Polytope>>> {
        self.levels.get((a.to_bits(), true), || self.problem.upper_sets(a))
    }

    fn lower(&self, a: f64) -> Result<Arc<Vec<Polytope>>> {
        self.levels.get((a.to_bits(), false), || self.problem.lower_sets(a))
    }

    fn color_test(&self, a: f64, b: f64) -> Result<Arc<ColorTest>> {
        self.tests.get((a.to_bits(), b.to_bits()), || {
            let blues = self.problem.regions(&self.upper(b)?);
            let reds = self.problem.regions(&self.lower(a)?);
            build_color_test_with(&self.problem.scheme, &blues, &reds, self.problem.k, &self.opts)
        })
    }

    /// The right or left test of `[a, b]`. The right test needs `a`
    /// lower-feasible and is constantly `left` when `b` is upper-infeasible;
    /// the left test mirrors it. When both hypotheses are nonempty the two
    /// tests coincide.
    pub fn segment_test(&self, a: f64, b: f64, side: TestSide) -> Result<SegmentTest> {
        if !(a < b) {
            return Err(Error::InvalidInput(format!("need a < b, got [{a}, {b}]")));
        }
        let up = !self.upper(b)?.is_empty();
        let low = !self.lower(a)?.is_empty();
        let rule = match side {
            TestSide::Right if !low => {
                return Err(Error::InvalidInput(format!("right test needs {a} lower-feasible")));
            }
            TestSide::Left if !up => {
                return Err(Error::InvalidInput(format!("left test needs {b} upper-feasible")));
            }
            TestSide::Right if !up => SegmentRule::Constant(Verdict::Left),
            TestSide::Left if !low => SegmentRule::Constant(Verdict::Right),
            _ => SegmentRule::Color(self.color_test(a, b)?),
        };
        let sigma = match &rule {
            SegmentRule::Constant(_) => 0.0,
            SegmentRule::Color(t) => t.eps_k,
        };
        Ok(SegmentTest { a, b, side, rule, sigma })
    }

    /// Runs the estimate on one observation with bounds from
    /// [`FunctionalProblem::value_range`], snapped by [`dyadic_bounds`],
    /// unless given.
    pub fn estimate(
        &self,
        obs: &Observation,
        params: &BisectionParams,
        bounds: Option<(f64, f64)>,
    ) -> Result<BisectionTrace> {
        if obs.k() != self.problem.k {
            return Err(Error::KMismatch { expected: self.problem.k, got: obs.k() });
        }
        let (a0, b0) = match bounds {
            Some(ab) => ab,
            None => {
                let (a, b) = self.problem.value_range()?;
                dyadic_bounds(a, b, params.l)?
            }
        };
        bisect(self, obs, params.l, params.delta, params.kappa, a0, b0)
    }
}

impl SegmentOracle for BisectionEstimator {
    type Obs = Observation;

    fn upper_feasible(&self, a: f64) -> Result<bool> {
        Ok(!self.upper(a)?.is_empty())
    }

    fn lower_feasible(&self, a: f64) -> Result<bool> {
        Ok(!self.lower(a)?.is_empty())
    }

    fn sigma(&self, a: f64, b: f64, side: TestSide) -> Result<f64> {
        Ok(self.segment_test(a, b, side)?.sigma)
    }

    fn verdict(&self, a: f64, b: f64, side: TestSide, obs: &Observation) -> Result<Verdict> {
        self.segment_test(a, b, side)?.verdict(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::rng_for;

    /// Ideal tests: `f(X) = [lo, hi]`, the tests answer by the position of
    /// the true value relative to the segment midpoint, risks are given by
    /// a closure of the segment width.
    struct Stub<S: Fn(f64) -> f64> {
        lo: f64,
        hi: f64,
        sigma: S,
    }

    impl<S: Fn(f64) -> f64> SegmentOracle for Stub<S> {
        type Obs = f64;

        fn upper_feasible(&self, a: f64) -> Result<bool> {
            Ok(a <= self.hi)
        }

        fn lower_feasible(&self, a: f64) -> Result<bool> {
            Ok(a >= self.lo)
        }

        fn sigma(&self, a: f64, b: f64, side: TestSide) -> Result<f64> {
            let s = match side {
                TestSide::Right if b > self.hi => 0.0,
                TestSide::Left if a < self.lo => 0.0,
                _ => (self.sigma)(b - a),
            };
            Ok(s)
        }

        fn verdict(&self, a: f64, b: f64, side: TestSide, x: &f64) -> Result<Verdict> {
            Ok(match side {
                TestSide::Right if b > self.hi => Verdict::Left,
                TestSide::Left if a < self.lo => Verdict::Right,
                _ if *x >= 0.5 * (a + b) => Verdict::Right,
                _ => Verdict::Left,
            })
        }
    }

    fn ideal(x: f64, l: usize) -> Vec<[f64; 2]> {
        let (mut a, mut b) = (0.0, 1.0);
        let mut out = vec![[a, b]];
        for _ in 0..l {
            let c = 0.5 * (a + b);
            if x >= c {
                a = c;
            } else {
                b = c;
            }
            out.push([a, b]);
        }
        out
    }

    #[test]
    fn choose_params_examples() {
        let p = choose_params(1.0 / 16.0, 0.0, 0.1, 0.0, 1.0, 10, 1, 1, None).unwrap();
        assert_eq!(p.l, 3);
        assert!((p.delta - 0.1 / 6.0).abs() < 1e-15);

        let p = choose_params(0.01, 0.0, 0.01, 0.0, 1.0, 100, 2, 3, Some(5)).unwrap();
        let want = (2.0 * 6000f64.ln() / (1.0 / (4.0 * 0.01 * 0.99f64)).ln() * 100.0).ceil() as usize;
        assert_eq!(p.l, 5);
        assert_eq!(p.k, want);
        assert_eq!(p.k, 539);

        let p = choose_params(0.3, 0.1, 0.05, 0.0, 1.0, 1, 1, 1, None).unwrap();
        assert!((p.kappa - 0.1).abs() < 1e-15);
        assert_eq!(p.l, 1);

        match choose_params(0.5, 0.0, 0.1, 0.0, 1.0, 1, 1, 1, None) {
            Err(Error::TrivialProblem { estimate }) => assert_eq!(estimate, 0.5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            choose_params(0.1, 0.0, 0.5, 0.0, 1.0, 1, 1, 1, None),
            Err(Error::EpsilonOutOfRange(_))
        ));
        assert!(choose_params(0.1, 0.06, 0.1, 0.0, 1.0, 1, 1, 1, None).is_err());
    }

    #[test]
    fn infeasible_midpoint_shrinks() {
        let stub = Stub { lo: 0.0, hi: 0.3, sigma: |_| 0.0 };
        let t = bisect(&stub, &0.1, 1, 0.1, 0.01, 0.0, 1.0).unwrap();
        assert_eq!(t.localizers, vec![[0.0, 1.0], [0.0, 0.5]]);
        assert_eq!(t.output, [0.0, 0.5]);
        assert_eq!(t.termination, Termination::InfeasibilityShrink);

        let stub = Stub { lo: 0.7, hi: 1.0, sigma: |_| 0.0 };
        let t = bisect(&stub, &0.8, 1, 0.1, 0.01, 0.0, 1.0).unwrap();
        assert_eq!(t.output, [0.5, 1.0]);
        assert_eq!(t.steps[0].outcome, StepOutcome::LowerInfeasible);

        let stub = Stub { lo: 0.55, hi: 0.45, sigma: |_| 0.0 };
        assert!(matches!(bisect(&stub, &0.5, 1, 0.1, 0.01, 0.0, 1.0), Err(Error::BothSidesInfeasible(_))));
    }

    #[test]
    fn consensus_follows_ideal_bisection() {
        let x = 0.3;
        let stub = Stub { lo: 0.0, hi: 1.0, sigma: |_| 0.0 };
        let t = bisect(&stub, &x, 4, 0.1, 0.001, 0.0, 1.0).unwrap();
        assert_eq!(t.termination, Termination::MaxSteps);
        let want = ideal(x, 4);
        assert_eq!(t.localizers.len(), want.len());
        for (got, w) in t.localizers.iter().zip(&want) {
            assert!((got[0] - w[0]).abs() < 1e-15 && (got[1] - w[1]).abs() < 1e-15);
        }
        assert!((t.output[1] - t.output[0] - 1.0 / 16.0).abs() < 1e-15);
        for w in t.localizers.windows(2) {
            assert!(w[1][0] >= w[0][0] && w[1][1] <= w[0][1]);
            assert!((w[1][1] - w[1][0] - 0.5 * (w[0][1] - w[0][0])).abs() < 1e-15);
        }
    }

    #[test]
    fn disagreement_outputs_u_v() {
        // x right at a dyadic point: the right test on [c, v] says left, the
        // left test on [u, c] says right.
        let x = 0.5 - 1e-4;
        let stub = Stub { lo: 0.0, hi: 1.0, sigma: |_| 0.0 };
        let t = bisect(&stub, &x, 5, 0.1, 0.01, 0.0, 1.0).unwrap();
        assert_eq!(t.termination, Termination::Disagreement);
        let s = t.steps.last().unwrap();
        assert_eq!(t.output, [s.u.unwrap(), s.v.unwrap()]);
        assert!(t.output[0] <= x && x <= t.output[1]);
        assert!(is_delta_good(&stub, s.c, s.v.unwrap(), TestSide::Right, 0.1).unwrap());
        assert!(is_delta_good(&stub, s.u.unwrap(), s.c, TestSide::Left, 0.1).unwrap());
    }

    #[test]
    fn not_good_returns_previous_localizer() {
        // risk 1 below width 0.3. Step 1: v = 0.8, u = 0.2, both tests say
        // left for x = 0.1. Step 2: [0.25, 0.5] is too narrow.
        let stub = Stub { lo: 0.0, hi: 1.0, sigma: |w| if w < 0.3 { 1.0 } else { 0.0 } };
        let t = bisect(&stub, &0.1, 10, 0.5, 0.1, 0.0, 1.0).unwrap();
        assert_eq!(t.termination, Termination::NotGood);
        assert_eq!(t.steps[0].outcome, StepOutcome::ConsensusLeft);
        assert_eq!(t.steps[1].outcome, StepOutcome::RightNotGood);
        assert_eq!(t.output, [0.0, 0.5]);
        assert_eq!(t.output, *t.localizers.last().unwrap());

        let stub = Stub { lo: 0.0, hi: 1.0, sigma: |w| if w < 0.6 { 1.0 } else { 0.0 } };
        let t = bisect(&stub, &0.1, 10, 0.5, 0.1, 0.0, 1.0).unwrap();
        assert_eq!(t.termination, Termination::NotGood);
        assert_eq!(t.output, [0.0, 1.0]);
    }

    #[test]
    fn kappa_scan_edge_cases() {
        let stub = Stub { lo: 0.0, hi: 1.0, sigma: |w| if w < 0.5 { 1.0 } else { 0.0 } };
        // [0.5, 1.0] is good, [0.5, 0.9] is not.
        assert_eq!(kappa_maximal(&stub, TestSide::Right, 0.5, 1.0, 0.1, 0.1).unwrap(), 1.0);
        assert_eq!(kappa_maximal(&stub, TestSide::Left, 0.5, 0.0, 0.1, 0.1).unwrap(), 0.0);

        let stub = Stub { lo: 0.0, hi: 1.0, sigma: |_| 0.5 };
        let v = kappa_maximal(&stub, TestSide::Right, 0.5, 1.0, 1.0, 0.07).unwrap();
        assert!(v > 0.5 && v - 0.5 <= 0.07 + 1e-12);
        let u = kappa_maximal(&stub, TestSide::Left, 0.5, 0.0, 1.0, 0.07).unwrap();
        assert!(u < 0.5 && 0.5 - u <= 0.07 + 1e-12);

        assert!(kappa_maximal(&stub, TestSide::Right, 0.5, 1.0, 0.1, 0.07).is_err());
    }

    fn interval_problem(scheme: Scheme, scale: f64, offset: f64, k: usize) -> FunctionalProblem {
        let dom = Polytope::from_box(vec![0.0], vec![1.0]).unwrap();
        let f = NConvexFunction::new(Expr::affine(vec![1.0], 0.0), dom.clone()).unwrap();
        let map = AffineMap::new(vec![vec![scale]], vec![offset]).unwrap();
        FunctionalProblem::new(scheme, k, vec![dom], map, f, 0.1).unwrap()
    }

    #[test]
    fn gaussian_kappa_scan_hits_threshold() {
        // sigma([c, v]) = exp(-K s^2 (v - c)^2 / 8) on f(x) = x, A x = s x.
        let (k, s, delta, kappa) = (50usize, 2.0, 0.01, 0.005);
        let est = BisectionEstimator::new(interval_problem(Scheme::gaussian(1), s, 0.0, k));
        let c = 0.2;
        let star = c + (8.0 * (1.0 / delta as f64).ln() / (k as f64 * s * s)).sqrt();
        let v = kappa_maximal(&est, TestSide::Right, c, 1.0, delta, kappa).unwrap();
        assert!(v >= star - 1e-6 && v < star + kappa, "v = {v}, threshold = {star}");
        let sig = est.sigma(c, v, TestSide::Right).unwrap();
        let want = (-(k as f64) * s * s * (v - c) * (v - c) / 8.0).exp();
        assert!((sig - want).abs() <= 1e-6 * want);
    }

    #[test]
    fn degenerate_and_identical_tests() {
        let est = BisectionEstimator::new(interval_problem(Scheme::poisson(1), 4.0, 1.0, 5));
        let t = est.segment_test(0.5, 1.5, TestSide::Right).unwrap();
        assert_eq!(t.rule, SegmentRule::Constant(Verdict::Left));
        assert_eq!(t.sigma, 0.0);
        let t = est.segment_test(-0.5, 0.5, TestSide::Left).unwrap();
        assert_eq!(t.rule, SegmentRule::Constant(Verdict::Right));
        assert_eq!(t.sigma, 0.0);
        assert!(est.segment_test(-0.5, 0.5, TestSide::Right).is_err());
        assert!(is_delta_good(&est, 0.5, 1.5, TestSide::Right, 1e-12).unwrap());

        let r = est.segment_test(0.3, 0.7, TestSide::Right).unwrap();
        let l = est.segment_test(0.3, 0.7, TestSide::Left).unwrap();
        assert_eq!(r.sigma, l.sigma);
        let mut rng = rng_for(3, 0);
        for mu in [1.0, 2.0, 3.0, 4.0, 5.0] {
            for _ in 0..20 {
                let obs = Scheme::poisson(1).sample(&[mu], &mut rng, 5).unwrap();
                assert_eq!(r.verdict(&obs).unwrap(), l.verdict(&obs).unwrap());
            }
        }
        // deterministic and memoized
        let n = est.cached_tests();
        assert_eq!(est.sigma(0.3, 0.7, TestSide::Right).unwrap(), r.sigma);
        assert_eq!(est.cached_tests(), n);
    }

    #[test]
    fn singleton_sets_sigma_is_affinity_power() {
        let dom = Polytope::from_box(vec![0.0], vec![1.0]).unwrap();
        let f = NConvexFunction::new(Expr::affine(vec![1.0], 0.0), dom).unwrap();
        let sets = vec![Polytope::point(&[0.2]).unwrap(), Polytope::point(&[0.8]).unwrap()];
        let map = AffineMap::new(vec![vec![5.0]], vec![1.0]).unwrap();
        let k = 7;
        let p = FunctionalProblem::new(Scheme::poisson(1), k, sets, map, f, 0.1).unwrap();
        let est = BisectionEstimator::new(p);
        let (mu, nu) = (2.0f64, 5.0f64);
        let want = (-(k as f64) * 0.5 * (mu.sqrt() - nu.sqrt()).powi(2)).exp();
        let got = est.sigma(0.4, 0.6, TestSide::Right).unwrap();
        assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    }

    fn hazard_domain(m: usize) -> Polytope {
        let mm = m as f64;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 1..m - 1 {
            let mut r = vec![0.0; m];
            r[i - 1] = 1.0;
            r[i] = -2.0;
            r[i + 1] = 1.0;
            a.push(r.clone());
            b.push(2.0 / (mm * mm));
            a.push(r.iter().map(|v| -v).collect());
            b.push(2.0 / (mm * mm));
        }
        Polytope::new(m, a, b, vec![vec![1.0; m]], vec![1.0], vec![1.0 / (3.0 * mm); m], vec![1.0; m]).unwrap()
    }

    #[test]
    fn hazard_upper_sets_at_one() {
        // s_j = 1 forces x_i = 0 for i > j, impossible with x >= 1/(3M)
        // unless j = M, where s_M = 1 everywhere.
        let m = 6;
        let dom = hazard_domain(m);
        for j in 1..=m {
            let f = NConvexFunction::new(Expr::hazard(m, j), dom.clone()).unwrap();
            let p = FunctionalProblem::new(
                Scheme::discrete(m),
                1,
                vec![dom.clone()],
                AffineMap::identity(m),
                f,
                0.1,
            )
            .unwrap();
            let want = usize::from(j == m);
            assert_eq!(p.upper_sets(1.0).unwrap().len(), want, "j = {j}");
            assert_eq!(p.lower_sets(1.0).unwrap().len(), 1);
        }
    }

    #[test]
    fn value_range_examples() {
        let p = interval_problem(Scheme::gaussian(1), 1.0, 0.0, 1);
        assert_eq!(p.value_range().unwrap(), (0.0, 1.0));

        // (x1 + 1) / (x2 + 1) on the unit box: range [1/2, 2].
        let dom = Polytope::from_box(vec![0.0; 2], vec![1.0; 2]).unwrap();
        let f = NConvexFunction::new(Expr::linear_fractional(vec![1.0, 0.0], 1.0, vec![0.0, 1.0], 1.0), dom.clone())
            .unwrap();
        let p = FunctionalProblem::new(Scheme::gaussian(2), 1, vec![dom.clone()], AffineMap::identity(2), f, 0.1)
            .unwrap();
        let (lo, hi) = p.value_range().unwrap();
        assert!(lo <= 0.5 && lo > 0.5 - 1e-9, "{lo}");
        assert!(hi >= 2.0 && hi < 2.0 + 1e-9, "{hi}");

        // max(x1, -x1 + 0.5) on [0, 1]^2: bounds must contain [0.25, 1].
        let e = Expr::max_of(vec![Expr::affine(vec![1.0, 0.0], 0.0), Expr::affine(vec![-1.0, 0.0], 0.5)]);
        let f = NConvexFunction::new(e, dom.clone()).unwrap();
        let p = FunctionalProblem::new(Scheme::gaussian(2), 1, vec![dom], AffineMap::identity(2), f, 0.1).unwrap();
        let (lo, hi) = p.value_range().unwrap();
        assert!(lo <= 0.25 && hi >= 1.0);
    }

    #[test]
    fn separated_gaussian_recovers_dyadic_localizer() {
        let x = 0.3;
        let k = 1_000_000;
        let est = BisectionEstimator::new(interval_problem(Scheme::gaussian(1), 1.0, 0.0, k));
        let mut rng = rng_for(11, 0);
        let obs = Scheme::gaussian(1).sample(&[x], &mut rng, k).unwrap();
        let params = BisectionParams { l: 4, delta: 1.0, kappa: 0.01, k };
        let t = est.estimate(&obs, &params, None).unwrap();
        assert_eq!(t.termination, Termination::MaxSteps);
        assert_eq!(t.output, ideal(x, 4)[4]);
        let again = est.estimate(&obs, &params, None).unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn trace_json_round_trip() {
        let stub = Stub { lo: 0.0, hi: 1.0, sigma: |_| 0.0 };
        let t = bisect(&stub, &0.3, 3, 0.1, 0.01, 0.0, 1.0).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"termination\":\"max_steps\""));
        let back: BisectionTrace = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn dyadic_bounds_make_halvings_exact() {
        let mut rng = rng_for(77, 0);
        for _ in 0..200 {
            let a0: f64 = rand::Rng::gen_range(&mut rng, -3.0..3.0);
            let b0 = a0 + rand::Rng::gen_range(&mut rng, 1e-3..5.0);
            let l = rand::Rng::gen_range(&mut rng, 1..12);
            let (a, b) = dyadic_bounds(a0, b0, l).unwrap();
            assert!(a <= a0 && b >= b0);
            assert!((a0 - a) <= 1e-10 * (1.0 + a0.abs()) && (b - b0) <= 1e-10 * (1.0 + b0.abs()));
            let (mut lo, mut hi) = (a, b);
            for k in 1..=l {
                let c = 0.5 * (lo + hi);
                if rand::Rng::gen::<bool>(&mut rng) {
                    lo = c;
                } else {
                    hi = c;
                }
                assert_eq!(hi - lo, (b - a) / 2f64.powi(k as i32));
            }
        }
        assert!(dyadic_bounds(1.0, 1.0, 3).is_err());
    }
}
