//! Bounded polyhedra, affine maps, and the two optimization kernels used
//! throughout the crate: a linear minimization oracle (dense simplex) and a
//! Frank-Wolfe maximizer for smooth concave objectives.

pub mod frank_wolfe;
mod simplex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use frank_wolfe::{fw_maximize, fw_maximize_until, ConcaveObjective, DiagonalQuadratic, FwOptions, FwSolution, FwStop};

/// Absolute feasibility tolerance. Every emptiness decision goes through it.
pub const FEAS_TOL: f64 = 1e-9;

/// Optimal vertex and value returned by [`Polytope::lp_minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub point: Vec<f64>,
    pub value: f64,
}

/// A bounded polyhedron `{x : A x <= b, C x = d, lo <= x <= hi}`.
///
/// Boundedness is verified when the set is built with [`Polytope::new`];
/// intersections of a bounded set with further constraints stay bounded and
/// skip the check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolytopeJson", into = "PolytopeJson")]
pub struct Polytope {
    dim: usize,
    ineq_a: Vec<Vec<f64>>,
    ineq_b: Vec<f64>,
    eq_c: Vec<Vec<f64>>,
    eq_d: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Polytope {
    /// Builds the set and checks that every coordinate is bounded on it.
    pub fn new(
        dim: usize,
        ineq_a: Vec<Vec<f64>>,
        ineq_b: Vec<f64>,
        eq_c: Vec<Vec<f64>>,
        eq_d: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> Result<Self> {
        let p = Self::unchecked(dim, ineq_a, ineq_b, eq_c, eq_d, lo, hi)?;
        p.check_bounded()?;
        Ok(p)
    }

    fn unchecked(
        dim: usize,
        ineq_a: Vec<Vec<f64>>,
        ineq_b: Vec<f64>,
        eq_c: Vec<Vec<f64>>,
        eq_d: Vec<f64>,
        lo: Vec<f64>,
        hi: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("polytope dimension must be positive".into()));
        }
        check_dim(ineq_a.len(), ineq_b.len())?;
        check_dim(eq_c.len(), eq_d.len())?;
        for row in ineq_a.iter().chain(eq_c.iter()) {
            check_dim(dim, row.len())?;
        }
        check_dim(dim, lo.len())?;
        check_dim(dim, hi.len())?;
        let all = ineq_a
            .iter()
            .flatten()
            .chain(ineq_b.iter())
            .chain(eq_c.iter().flatten())
            .chain(eq_d.iter());
        for v in all {
            if !v.is_finite() {
                return Err(Error::InvalidInput("constraint data must be finite".into()));
            }
        }
        for (l, h) in lo.iter().zip(&hi) {
            if l.is_nan() || h.is_nan() || *l == f64::INFINITY || *h == f64::NEG_INFINITY {
                return Err(Error::InvalidInput("invalid box bounds".into()));
            }
        }
        Ok(Self { dim, ineq_a, ineq_b, eq_c, eq_d, lo, hi })
    }

    /// The box `[lo, hi]`; all bounds must be finite.
    pub fn from_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
            return Err(Error::Unbounded);
        }
        Self::new(lo.len(), vec![], vec![], vec![], vec![], lo, hi)
    }

    /// The singleton `{x}`.
    pub fn point(x: &[f64]) -> Result<Self> {
        Self::from_box(x.to_vec(), x.to_vec())
    }

    /// The probability simplex `{x >= 0, sum x = 1}`.
    pub fn simplex(dim: usize) -> Result<Self> {
        Self::new(
            dim,
            vec![],
            vec![],
            vec![vec![1.0; dim]],
            vec![1.0],
            vec![0.0; dim],
            vec![f64::INFINITY; dim],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inequalities(&self) -> (&[Vec<f64>], &[f64]) {
        (&self.ineq_a, &self.ineq_b)
    }

    pub fn equalities(&self) -> (&[Vec<f64>], &[f64]) {
        (&self.eq_c, &self.eq_d)
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    /// Some(x) when the set is a box with `lo == hi`.
    pub fn as_point(&self) -> Option<&[f64]> {
        if self.ineq_a.is_empty()
            && self.eq_c.is_empty()
            && self.lo.iter().zip(&self.hi).all(|(l, h)| l == h)
        {
            Some(&self.lo)
        } else {
            None
        }
    }

    fn is_box(&self) -> bool {
        self.ineq_a.is_empty() && self.eq_c.is_empty()
    }

    /// Concatenates the constraints of both sets.
    pub fn intersect(&self, other: &Polytope) -> Result<Polytope> {
        check_dim(self.dim, other.dim)?;
        let mut out = self.clone();
        out.ineq_a.extend(other.ineq_a.iter().cloned());
        out.ineq_b.extend(other.ineq_b.iter().copied());
        out.eq_c.extend(other.eq_c.iter().cloned());
        out.eq_d.extend(other.eq_d.iter().copied());
        for i in 0..self.dim {
            out.lo[i] = out.lo[i].max(other.lo[i]);
            out.hi[i] = out.hi[i].min(other.hi[i]);
        }
        Ok(out)
    }

    /// Adds `row^T x <= rhs`.
    pub fn with_inequality(&self, row: Vec<f64>, rhs: f64) -> Result<Polytope> {
        check_dim(self.dim, row.len())?;
        let mut out = self.clone();
        out.ineq_a.push(row);
        out.ineq_b.push(rhs);
        Ok(out)
    }

    /// Adds `row^T x = rhs`.
    pub fn with_equality(&self, row: Vec<f64>, rhs: f64) -> Result<Polytope> {
        check_dim(self.dim, row.len())?;
        let mut out = self.clone();
        out.eq_c.push(row);
        out.eq_d.push(rhs);
        Ok(out)
    }

    /// The Cartesian product `self x other` in `R^(n1 + n2)`.
    pub fn product(&self, other: &Polytope) -> Polytope {
        let n1 = self.dim;
        let n = n1 + other.dim;
        let lift = |rows: &[Vec<f64>], offset: usize| -> Vec<Vec<f64>> {
            rows.iter()
                .map(|r| {
                    let mut v = vec![0.0; n];
                    v[offset..offset + r.len()].copy_from_slice(r);
                    v
                })
                .collect()
        };
        let mut ineq_a = lift(&self.ineq_a, 0);
        ineq_a.extend(lift(&other.ineq_a, n1));
        let mut eq_c = lift(&self.eq_c, 0);
        eq_c.extend(lift(&other.eq_c, n1));
        Polytope {
            dim: n,
            ineq_a,
            ineq_b: self.ineq_b.iter().chain(&other.ineq_b).copied().collect(),
            eq_c,
            eq_d: self.eq_d.iter().chain(&other.eq_d).copied().collect(),
            lo: self.lo.iter().chain(&other.lo).copied().collect(),
            hi: self.hi.iter().chain(&other.hi).copied().collect(),
        }
    }

    fn lp_input(&self) -> simplex::LpInput<'_> {
        simplex::LpInput {
            ineq_a: &self.ineq_a,
            ineq_b: &self.ineq_b,
            eq_c: &self.eq_c,
            eq_d: &self.eq_d,
            lo: &self.lo,
            hi: &self.hi,
        }
    }

    /// Minimizes `cost^T x` over the set.
    pub fn lp_minimize(&self, cost: &[f64]) -> Result<LpSolution> {
        check_dim(self.dim, cost.len())?;
        let point = if self.is_box() {
            self.box_minimize(cost)?
        } else {
            simplex::solve(&self.lp_input(), cost, FEAS_TOL)?
        };
        let value = dot(cost, &point);
        Ok(LpSolution { point, value })
    }

    fn box_minimize(&self, cost: &[f64]) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let (l, h) = (self.lo[i], self.hi[i]);
            if l > h + FEAS_TOL {
                return Err(Error::Infeasible);
            }
            let v = if cost[i] > 0.0 {
                l
            } else if cost[i] < 0.0 {
                h
            } else if l.is_finite() {
                l
            } else if h.is_finite() {
                h
            } else {
                0.0
            };
            if !v.is_finite() {
                return Err(Error::Unbounded);
            }
            x.push(v);
        }
        Ok(x)
    }

    /// True iff the phase-1 infeasibility exceeds [`FEAS_TOL`].
    pub fn is_empty(&self) -> bool {
        if self.is_box() {
            return self.lo.iter().zip(&self.hi).any(|(l, h)| *l > *h + FEAS_TOL);
        }
        match simplex::phase1_only(&self.lp_input()) {
            Ok(p) => p.infeasibility > FEAS_TOL,
            Err(_) => true,
        }
    }

    fn check_bounded(&self) -> Result<()> {
        if self.is_empty() {
            return Ok(());
        }
        let mut cost = vec![0.0; self.dim];
        for i in 0..self.dim {
            if self.lo[i].is_finite() && self.hi[i].is_finite() {
                continue;
            }
            for s in [1.0, -1.0] {
                cost[i] = s;
                self.lp_minimize(&cost)?;
            }
            cost[i] = 0.0;
        }
        Ok(())
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for (row, b) in self.ineq_a.iter().zip(&self.ineq_b) {
            v = v.max(dot(row, x) - b);
        }
        for (row, d) in self.eq_c.iter().zip(&self.eq_d) {
            v = v.max((dot(row, x) - d).abs());
        }
        for i in 0..self.dim {
            v = v.max(self.lo[i] - x[i]).max(x[i] - self.hi[i]);
        }
        v
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim && self.max_violation(x) <= tol
    }

    /// Minimum and maximum of `w^T x + c` over the set.
    pub fn range_of(&self, w: &[f64], c: f64) -> Result<(f64, f64)> {
        let lo = self.lp_minimize(w)?.value + c;
        let neg: Vec<f64> = w.iter().map(|v| -v).collect();
        let hi = -self.lp_minimize(&neg)?.value + c;
        Ok((lo, hi))
    }

    /// A random point: a Dirichlet(1) combination of `vertices` LP
    /// vertices for random costs.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R, vertices: usize) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.dim];
        let mut total = 0.0;
        for _ in 0..vertices.max(1) {
            let cost: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v = self.lp_minimize(&cost)?.point;
            let w = -(1.0 - rng.gen::<f64>()).ln();
            total += w;
            for (a, b) in x.iter_mut().zip(&v) {
                *a += w * b;
            }
        }
        for a in x.iter_mut() {
            *a /= total;
        }
        Ok(x)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolytopeJson {
    dim: usize,
    #[serde(rename = "A", default)]
    a: Vec<Vec<f64>>,
    #[serde(default)]
    b: Vec<f64>,
    #[serde(rename = "C", default)]
    c: Vec<Vec<f64>>,
    #[serde(default)]
    d: Vec<f64>,
    lo: Vec<Option<f64>>,
    hi: Vec<Option<f64>>,
}

impl TryFrom<PolytopeJson> for Polytope {
    type Error = Error;

    fn try_from(j: PolytopeJson) -> Result<Self> {
        let lo = j.lo.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let hi = j.hi.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
        Polytope::new(j.dim, j.a, j.b, j.c, j.d, lo, hi)
    }
}

impl From<Polytope> for PolytopeJson {
    fn from(p: Polytope) -> Self {
        let fin = |v: &f64| if v.is_finite() { Some(*v) } else { None };
        PolytopeJson {
            dim: p.dim,
            lo: p.lo.iter().map(fin).collect(),
            hi: p.hi.iter().map(fin).collect(),
            a: p.ineq_a,
            b: p.ineq_b,
            c: p.eq_c,
            d: p.eq_d,
        }
    }
}

/// An affine map `x -> M x + m` between coordinate spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AffineMapJson", into = "AffineMapJson")]
pub struct AffineMap {
    matrix: Vec<Vec<f64>>,
    offset: Vec<f64>,
    input_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineMapJson {
    matrix: Vec<Vec<f64>>,
    #[serde(default)]
    offset: Option<Vec<f64>>,
}

impl TryFrom<AffineMapJson> for AffineMap {
    type Error = Error;

    fn try_from(j: AffineMapJson) -> Result<Self> {
        let m = j.matrix.len();
        AffineMap::new(j.matrix, j.offset.unwrap_or_else(|| vec![0.0; m]))
    }
}

impl From<AffineMap> for AffineMapJson {
    fn from(a: AffineMap) -> Self {
        AffineMapJson { matrix: a.matrix, offset: Some(a.offset) }
    }
}

impl AffineMap {
    pub fn new(matrix: Vec<Vec<f64>>, offset: Vec<f64>) -> Result<Self> {
        check_dim(matrix.len(), offset.len())?;
        let input_dim = matrix.first().map_or(0, Vec::len);
        if input_dim == 0 {
            return Err(Error::InvalidInput("affine map needs a nonempty matrix".into()));
        }
        for row in &matrix {
            check_dim(input_dim, row.len())?;
        }
        Ok(Self { matrix, offset, input_dim })
    }

    /// A linear map without offset.
    pub fn linear(matrix: Vec<Vec<f64>>) -> Result<Self> {
        let m = matrix.len();
        Self::new(matrix, vec![0.0; m])
    }

    pub fn identity(n: usize) -> Self {
        let matrix = (0..n)
            .map(|i| {
                let mut r = vec![0.0; n];
                r[i] = 1.0;
                r
            })
            .collect();
        Self { matrix, offset: vec![0.0; n], input_dim: n }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.offset.len()
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, o)| dot(row, x) + o)
            .collect()
    }

    /// The linear part applied to `x` (no offset).
    pub fn apply_linear(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.iter().map(|row| dot(row, x)).collect()
    }

    /// `out += M^T v`.
    pub fn add_transpose_apply(&self, v: &[f64], out: &mut [f64]) {
        for (row, vi) in self.matrix.iter().zip(v) {
            if *vi == 0.0 {
                continue;
            }
            for (o, r) in out.iter_mut().zip(row) {
                *o += r * vi;
            }
        }
    }

    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim];
        self.add_transpose_apply(v, &mut out);
        out
    }
}

/// Linear minimization oracle used by Frank-Wolfe.
pub trait LinearOracle: Sync {
    fn dim(&self) -> usize;

    /// A minimizer of `cost^T x` over the feasible set.
    fn minimize(&self, cost: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOracle for Polytope {
    fn dim(&self) -> usize {
        self.dim
    }

    fn minimize(&self, cost: &[f64]) -> Result<Vec<f64>> {
        self.lp_minimize(cost).map(|s| s.point)
    }
}

/// Product of two polytopes; the LP splits into two independent LPs.
pub struct ProductSet<'a> {
    pub first: &'a Polytope,
    pub second: &'a Polytope,
}

impl LinearOracle for ProductSet<'_> {
    fn dim(&self) -> usize {
        self.first.dim + self.second.dim
    }

    fn minimize(&self, cost: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), cost.len())?;
        let (c1, c2) = cost.split_at(self.first.dim);
        let mut x = self.first.lp_minimize(c1)?.point;
        x.extend(self.second.lp_minimize(c2)?.point);
        Ok(x)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
