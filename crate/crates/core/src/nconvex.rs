//! N-convex functions: functions whose upper and lower level sets on a
//! polytope `X` are unions of at most N convex polytopes.
//!
//! Functions are small expression trees built from affine and
//! linear-fractional pieces, negation, maxima and minima, and the
//! conditional regularized quantile of a distribution on `S x T`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dot, Polytope, FEAS_TOL};

/// Expression tree of an N-convex function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Expr {
    /// `g^T x + c`.
    Affine { g: Vec<f64>, c: f64 },
    /// `(g^T x + g0) / (h^T x + h0)`, denominator positive on `X`.
    LinearFractional { g: Vec<f64>, g0: f64, h: Vec<f64>, h0: f64 },
    Neg { arg: Box<Expr> },
    Max { args: Vec<Expr> },
    Min { args: Vec<Expr> },
    /// Regularized `alpha`-quantile of `s` conditioned on `t = tau` (0-based)
    /// for `x` a distribution on `S x T` laid out as `x[s_idx * |T| + t_idx]`.
    ConditionalQuantile { s: Vec<f64>, t_size: usize, tau: usize, alpha: f64 },
}

/// A conjunction of inequalities `row^T x <= rhs`; empty means "all of X".
type Conj = Vec<(Vec<f64>, f64)>;

impl Expr {
    pub fn affine(g: Vec<f64>, c: f64) -> Expr {
        Expr::Affine { g, c }
    }

    pub fn linear_fractional(g: Vec<f64>, g0: f64, h: Vec<f64>, h0: f64) -> Expr {
        Expr::LinearFractional { g, g0, h, h0 }
    }

    pub fn negate(self) -> Expr {
        Expr::Neg { arg: Box::new(self) }
    }

    pub fn max_of(args: Vec<Expr>) -> Expr {
        Expr::Max { args }
    }

    pub fn min_of(args: Vec<Expr>) -> Expr {
        Expr::Min { args }
    }

    /// Hazard rate `x_j / sum_{i >= j} x_i` on `R^m` (`j` 1-based).
    pub fn hazard(m: usize, j: usize) -> Expr {
        let mut g = vec![0.0; m];
        g[j - 1] = 1.0;
        let h = (0..m).map(|i| if i + 1 >= j { 1.0 } else { 0.0 }).collect();
        Expr::LinearFractional { g, g0: 0.0, h, h0: 0.0 }
    }

    /// Declared N.
    pub fn n_bound(&self) -> usize {
        match self {
            Expr::Affine { .. } | Expr::LinearFractional { .. } | Expr::ConditionalQuantile { .. } => 1,
            Expr::Neg { arg } => arg.n_bound(),
            Expr::Max { args } | Expr::Min { args } => {
                let prod = args.iter().map(Expr::n_bound).fold(1usize, |a, b| a.saturating_mul(b));
                let sum = args.iter().map(Expr::n_bound).sum();
                prod.max(sum)
            }
        }
    }

    fn validate(&self, domain: &Polytope) -> Result<()> {
        let n = domain.dim();
        match self {
            Expr::Affine { g, .. } => check_dim(n, g.len()),
            Expr::LinearFractional { g, h, h0, .. } => {
                check_dim(n, g.len())?;
                check_dim(n, h.len())?;
                let (lo, _) = domain.range_of(h, *h0)?;
                if lo > FEAS_TOL {
                    Ok(())
                } else {
                    Err(Error::DenominatorNotPositive(lo))
                }
            }
            Expr::Neg { arg } => arg.validate(domain),
            Expr::Max { args } | Expr::Min { args } => {
                if args.is_empty() {
                    return Err(Error::EmptyList);
                }
                args.iter().try_for_each(|a| a.validate(domain))
            }
            Expr::ConditionalQuantile { s, t_size, tau, alpha } => {
                if tau >= t_size {
                    return Err(Error::TauNotInT(*tau));
                }
                check_dim(n, s.len() * t_size)?;
                check_support(s)?;
                if !(0.0..=1.0).contains(alpha) {
                    return Err(Error::InvalidInput(format!("quantile level {alpha} outside [0, 1]")));
                }
                Ok(())
            }
        }
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        match self {
            Expr::Affine { g, c } => Ok(dot(g, x) + c),
            Expr::LinearFractional { g, g0, h, h0 } => {
                let den = dot(h, x) + h0;
                if !(den > 0.0) {
                    return Err(Error::DenominatorNotPositive(den));
                }
                Ok((dot(g, x) + g0) / den)
            }
            Expr::Neg { arg } => Ok(-arg.eval(x)?),
            Expr::Max { args } => args.iter().try_fold(f64::NEG_INFINITY, |m, a| Ok(m.max(a.eval(x)?))),
            Expr::Min { args } => args.iter().try_fold(f64::INFINITY, |m, a| Ok(m.min(a.eval(x)?))),
            Expr::ConditionalQuantile { s, t_size, tau, alpha } => {
                let col: Vec<f64> = (0..s.len()).map(|i| x[i * t_size + tau]).collect();
                let total: f64 = col.iter().sum();
                let q: Vec<f64> = col.iter().map(|v| v / total).collect();
                regularized_quantile(s, &q, *alpha)
            }
        }
    }

    /// Unpruned conjunctions whose union is `{x in X : f(x) >= a}`
    /// (`upper`) or `{f(x) <= a}`.
    fn level(&self, a: f64, upper: bool, domain: &Polytope, out: &mut Vec<Conj>) -> Result<()> {
        match self {
            Expr::Affine { g, c } => {
                let (row, rhs) = if upper {
                    (g.iter().map(|v| -v).collect(), c - a)
                } else {
                    (g.clone(), a - c)
                };
                out.push(vec![(row, rhs)]);
            }
            Expr::LinearFractional { g, g0, h, h0 } => {
                // (g - a h)^T x + (g0 - a h0) >= 0  or  <= 0
                let w: Vec<f64> = g.iter().zip(h).map(|(gi, hi)| gi - a * hi).collect();
                let w0 = g0 - a * h0;
                let (row, rhs) = if upper { (w.iter().map(|v| -v).collect(), w0) } else { (w, -w0) };
                out.push(vec![(row, rhs)]);
            }
            Expr::Neg { arg } => arg.level(-a, !upper, domain, out)?,
            Expr::Max { args } | Expr::Min { args } => {
                let union = matches!(self, Expr::Max { .. }) == upper;
                if union {
                    for arg in args {
                        arg.level(a, upper, domain, out)?;
                    }
                } else {
                    let parts = args
                        .iter()
                        .map(|arg| {
                            let mut v = Vec::new();
                            arg.level(a, upper, domain, &mut v)?;
                            Ok(v)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    expand_intersections(&parts, domain, out)?;
                }
            }
            Expr::ConditionalQuantile { s, t_size, tau, alpha } => {
                quantile_level(s, *t_size, *tau, *alpha, a, upper, domain.dim(), out)
            }
        }
        Ok(())
    }
}

/// Intersects one member from each union, pruning empty partial
/// intersections as soon as they appear.
fn expand_intersections(parts: &[Vec<Conj>], domain: &Polytope, out: &mut Vec<Conj>) -> Result<()> {
    fn rec(parts: &[Vec<Conj>], acc: &Conj, domain: &Polytope, out: &mut Vec<Conj>) -> Result<()> {
        let Some((first, rest)) = parts.split_first() else {
            out.push(acc.clone());
            return Ok(());
        };
        for c in first {
            let mut next = acc.clone();
            next.extend(c.iter().cloned());
            if !rest.is_empty() && to_polytope(domain, &next)?.is_empty() {
                continue;
            }
            rec(rest, &next, domain, out)?;
        }
        Ok(())
    }
    rec(parts, &Vec::new(), domain, out)
}

fn to_polytope(domain: &Polytope, conj: &Conj) -> Result<Polytope> {
    let mut p = domain.clone();
    for (row, rhs) in conj {
        p = p.with_inequality(row.clone(), *rhs)?;
    }
    Ok(p)
}

fn check_support(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::BadDistribution("empty support".into()));
    }
    if s.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::BadDistribution("support must be strictly increasing".into()));
    }
    Ok(())
}

/// `chi_alpha[q]`: mass `q_1` sits at `s_1` and mass `q_k` (k >= 2) is
/// spread uniformly over `[s_{k-1}, s_k]`; returns the smallest `s` whose
/// cumulative mass reaches `alpha`.
pub fn regularized_quantile(s: &[f64], q: &[f64], alpha: f64) -> Result<f64> {
    check_support(s)?;
    if q.len() != s.len() {
        return Err(Error::BadDistribution(format!("{} masses for {} support points", q.len(), s.len())));
    }
    if q.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::BadDistribution("masses must be positive".into()));
    }
    let total: f64 = q.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadDistribution(format!("masses sum to {total}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::BadDistribution(format!("level {alpha} outside [0, 1]")));
    }
    let mut cum = q[0];
    if alpha <= cum {
        return Ok(s[0]);
    }
    for k in 1..s.len() {
        let next = cum + q[k];
        if alpha <= next || k + 1 == s.len() {
            let frac = ((alpha - cum) / q[k]).clamp(0.0, 1.0);
            return Ok(s[k - 1] + frac * (s[k] - s[k - 1]));
        }
        cum = next;
    }
    Ok(s[s.len() - 1])
}

/// Level sets of the conditional quantile. With `G_m(p) = sum_{i <= m}
/// p(i, tau)` and `s_k < a <= s_{k+1}`, both sets are cut by
/// `[(s_{k+1} - a) G_k + (a - s_k) G_{k+1}] / (s_{k+1} - s_k)` vs
/// `alpha G_M`. At `a = s_1` the lower set is `{G_1 >= alpha G_M}`.
#[allow(clippy::too_many_arguments)]
fn quantile_level(s: &[f64], t_size: usize, tau: usize, alpha: f64, a: f64, upper: bool, n: usize, out: &mut Vec<Conj>) {
    let m = s.len();
    let cum_row = |upto: usize| -> Vec<f64> {
        let mut r = vec![0.0; n];
        for i in 0..upto {
            r[i * t_size + tau] = 1.0;
        }
        r
    };
    let g_m = cum_row(m);
    if a < s[0] {
        if upper {
            out.push(Vec::new());
        }
        return;
    }
    if a > s[m - 1] {
        if !upper {
            out.push(Vec::new());
        }
        return;
    }
    if a == s[0] {
        if upper {
            out.push(Vec::new());
        } else {
            // alpha G_M - G_1 <= 0
            let row: Vec<f64> = g_m.iter().zip(cum_row(1)).map(|(gm, g1)| alpha * gm - g1).collect();
            out.push(vec![(row, 0.0)]);
        }
        return;
    }
    // 1-based k with s_k < a <= s_{k+1}.
    let k = (1..m).find(|&k| s[k - 1] < a && a <= s[k]).expect("a lies in (s_1, s_M]");
    let (lo, hi) = (s[k - 1], s[k]);
    let gk = cum_row(k);
    let gk1 = cum_row(k + 1);
    // gamma-row minus alpha G_M
    let row: Vec<f64> = (0..n)
        .map(|i| ((hi - a) * gk[i] + (a - lo) * gk1[i]) / (hi - lo) - alpha * g_m[i])
        .collect();
    if upper {
        out.push(vec![(row, 0.0)]);
    } else {
        out.push(vec![(row.iter().map(|v| -v).collect(), 0.0)]);
    }
}

/// An N-convex function on a polytope domain `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NConvexJson", into = "NConvexJson")]
pub struct NConvexFunction {
    expr: Expr,
    domain: Polytope,
}

#[derive(Serialize, Deserialize)]
struct NConvexJson {
    expr: Expr,
    domain: Polytope,
}

impl TryFrom<NConvexJson> for NConvexFunction {
    type Error = Error;

    fn try_from(j: NConvexJson) -> Result<Self> {
        NConvexFunction::new(j.expr, j.domain)
    }
}

impl From<NConvexFunction> for NConvexJson {
    fn from(f: NConvexFunction) -> Self {
        NConvexJson { expr: f.expr, domain: f.domain }
    }
}

impl NConvexFunction {
    /// Checks dimensions, nonempty argument lists and, for linear-fractional
    /// pieces, that the denominator is positive on `domain` (by LP).
    pub fn new(expr: Expr, domain: Polytope) -> Result<Self> {
        expr.validate(&domain)?;
        Ok(Self { expr, domain })
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn domain(&self) -> &Polytope {
        &self.domain
    }

    pub fn n_bound(&self) -> usize {
        self.expr.n_bound()
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.domain.dim(), x.len())?;
        self.expr.eval(x)
    }

    /// Nonempty convex pieces of `{x in X : f(x) >= a}`.
    pub fn level_geq(&self, a: f64) -> Result<Vec<Polytope>> {
        self.level_sets(a, true)
    }

    /// Nonempty convex pieces of `{x in X : f(x) <= a}`.
    pub fn level_leq(&self, a: f64) -> Result<Vec<Polytope>> {
        self.level_sets(a, false)
    }

    fn level_sets(&self, a: f64, upper: bool) -> Result<Vec<Polytope>> {
        let mut conj = Vec::new();
        self.expr.level(a, upper, &self.domain, &mut conj)?;
        let mut out = Vec::with_capacity(conj.len());
        for c in &conj {
            let p = to_polytope(&self.domain, c)?;
            if !p.is_empty() {
                out.push(p);
            }
        }
        Ok(out)
    }
}
