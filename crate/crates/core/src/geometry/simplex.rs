//! Dense two-phase simplex with Bland's rule.
//!
//! Problems arrive in the general form
//! `min c^T x  s.t.  A x <= b, C x = d, lo <= x <= hi`
//! and are rewritten over nonnegative variables before pivoting.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;

/// Outcome of phase 1 only: the minimal total infeasibility.
pub(crate) struct Phase1 {
    pub infeasibility: f64,
}

#[derive(Clone, Copy)]
enum VarMap {
    /// x = lo + z
    Lower(f64),
    /// x = hi - z
    Upper(f64),
    /// x = z+ - z-, second column index
    Free(usize),
}

pub(crate) struct LpInput<'a> {
    pub ineq_a: &'a [Vec<f64>],
    pub ineq_b: &'a [f64],
    pub eq_c: &'a [Vec<f64>],
    pub eq_d: &'a [f64],
    pub lo: &'a [f64],
    pub hi: &'a [f64],
}

struct Tableau {
    rows: usize,
    cols: usize,
    // (rows + 1) x (cols + 1); last row is the objective, last column the rhs.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let p = self.t[pr * w + pc];
        for c in 0..w {
            self.t[pr * w + c] /= p;
        }
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let factor = self.t[r * w + pc];
            if factor == 0.0 {
                continue;
            }
            for c in 0..w {
                let v = self.t[pr * w + c];
                if v != 0.0 {
                    self.t[r * w + c] -= factor * v;
                }
            }
            self.t[r * w + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Runs Bland's-rule simplex on the objective row over the allowed columns.
    /// Returns `Err(Unbounded)` if an improving column has no positive entry.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let max_pivots = 50_000 + 100 * (self.rows + self.cols);
        for _ in 0..max_pivots {
            let obj = self.rows;
            let entering = (0..allowed).find(|&c| self.at(obj, c) < -COST_TOL);
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r).max(0.0) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - 1e-13
                                || (ratio <= bratio + 1e-13 && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            match best {
                Some((pr, _)) => self.pivot(pr, pc),
                None => return Err(Error::Unbounded),
            }
        }
        Err(Error::InvalidInput("simplex pivot limit reached".into()))
    }
}

struct Standard {
    tab: Tableau,
    nz: usize,
    n_struct: usize,
    maps: Vec<(usize, VarMap)>,
    art_start: usize,
}

fn build(input: &LpInput<'_>) -> Standard {
    let n = input.lo.len();
    // Column layout for z.
    let mut maps = Vec::with_capacity(n);
    let mut nz = 0usize;
    let mut extra_upper: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let (lo, hi) = (input.lo[i], input.hi[i]);
        if lo.is_finite() {
            maps.push((nz, VarMap::Lower(lo)));
            if hi.is_finite() {
                extra_upper.push((nz, hi - lo));
            }
            nz += 1;
        } else if hi.is_finite() {
            maps.push((nz, VarMap::Upper(hi)));
            nz += 1;
        } else {
            maps.push((nz, VarMap::Free(nz + 1)));
            nz += 2;
        }
    }

    // Each row: coefficients over z, rhs, kind (true = equality).
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    let push_row = |coef: &[f64], rhs: f64, eq: bool, rows: &mut Vec<(Vec<f64>, f64, bool)>| {
        let mut z = vec![0.0; nz];
        let mut r = rhs;
        for (i, &a) in coef.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let (col, m) = maps[i];
            match m {
                VarMap::Lower(lo) => {
                    z[col] += a;
                    r -= a * lo;
                }
                VarMap::Upper(hi) => {
                    z[col] -= a;
                    r -= a * hi;
                }
                VarMap::Free(neg) => {
                    z[col] += a;
                    z[neg] -= a;
                }
            }
        }
        rows.push((z, r, eq));
    };
    for (a, &b) in input.ineq_a.iter().zip(input.ineq_b) {
        push_row(a, b, false, &mut rows);
    }
    for (col, width) in &extra_upper {
        let mut z = vec![0.0; nz];
        z[*col] = 1.0;
        rows.push((z, *width, false));
    }
    for (c, &d) in input.eq_c.iter().zip(input.eq_d) {
        push_row(c, d, true, &mut rows);
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| !r.2).count();
    let n_art = rows
        .iter()
        .filter(|(_, rhs, eq)| *eq || *rhs < 0.0)
        .count();
    let cols = nz + n_slack + n_art;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    let mut basis = vec![0usize; m];
    let mut slack = nz;
    let art_start = nz + n_slack;
    let mut art = art_start;
    for (r, (coef, rhs, eq)) in rows.iter().enumerate() {
        let sign = if *rhs < 0.0 { -1.0 } else { 1.0 };
        for (c, &a) in coef.iter().enumerate() {
            t[r * w + c] = sign * a;
        }
        t[r * w + cols] = sign * rhs;
        if !*eq {
            t[r * w + slack] = sign;
            if sign > 0.0 {
                basis[r] = slack;
            }
            slack += 1;
        }
        if *eq || sign < 0.0 {
            t[r * w + art] = 1.0;
            basis[r] = art;
            art += 1;
        }
    }
    Standard {
        tab: Tableau { rows: m, cols, t, basis },
        nz,
        n_struct: n,
        maps,
        art_start,
    }
}

impl Standard {
    fn phase1(&mut self) -> Result<f64> {
        let tab = &mut self.tab;
        let w = tab.cols + 1;
        let obj = tab.rows;
        for c in 0..w {
            tab.t[obj * w + c] = 0.0;
        }
        for c in self.art_start..tab.cols {
            tab.t[obj * w + c] = 1.0;
        }
        // Price out basic artificials.
        for r in 0..tab.rows {
            if tab.basis[r] >= self.art_start {
                for c in 0..w {
                    tab.t[obj * w + c] -= tab.t[r * w + c];
                }
            }
        }
        tab.optimize(tab.cols)?;
        Ok(-tab.t[obj * w + tab.cols])
    }

    /// Pivots zero-level artificials out of the basis; drops redundant rows.
    fn drive_out_artificials(&mut self) {
        let mut r = 0;
        while r < self.tab.rows {
            if self.tab.basis[r] >= self.art_start {
                let pc = (0..self.art_start).find(|&c| self.tab.at(r, c).abs() > 1e-9);
                match pc {
                    Some(c) => {
                        self.tab.pivot(r, c);
                        r += 1;
                    }
                    None => self.remove_row(r),
                }
            } else {
                r += 1;
            }
        }
    }

    fn remove_row(&mut self, r: usize) {
        let w = self.tab.cols + 1;
        self.tab.t.drain(r * w..(r + 1) * w);
        self.tab.basis.remove(r);
        self.tab.rows -= 1;
    }

    fn z_cost(&self, cost: &[f64]) -> Vec<f64> {
        let mut zc = vec![0.0; self.nz];
        for i in 0..self.n_struct {
            let (col, m) = self.maps[i];
            match m {
                VarMap::Lower(_) => zc[col] += cost[i],
                VarMap::Upper(_) => zc[col] -= cost[i],
                VarMap::Free(neg) => {
                    zc[col] += cost[i];
                    zc[neg] -= cost[i];
                }
            }
        }
        zc
    }

    fn phase2(&mut self, cost: &[f64]) -> Result<()> {
        let zc = self.z_cost(cost);
        let tab = &mut self.tab;
        let w = tab.cols + 1;
        let obj = tab.rows;
        for c in 0..w {
            tab.t[obj * w + c] = 0.0;
        }
        tab.t[obj * w..obj * w + self.nz].copy_from_slice(&zc);
        for r in 0..tab.rows {
            let b = tab.basis[r];
            let f = tab.t[obj * w + b];
            if f != 0.0 {
                for c in 0..w {
                    tab.t[obj * w + c] -= f * tab.t[r * w + c];
                }
            }
        }
        // Artificial columns are excluded from entering.
        tab.optimize(self.art_start)
    }

    fn primal(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.nz];
        for r in 0..self.tab.rows {
            let b = self.tab.basis[r];
            if b < self.nz {
                z[b] = self.tab.rhs(r).max(0.0);
            }
        }
        (0..self.n_struct)
            .map(|i| {
                let (col, m) = self.maps[i];
                match m {
                    VarMap::Lower(lo) => lo + z[col],
                    VarMap::Upper(hi) => hi - z[col],
                    VarMap::Free(neg) => z[col] - z[neg],
                }
            })
            .collect()
    }
}

pub(crate) fn phase1_only(input: &LpInput<'_>) -> Result<Phase1> {
    let mut s = build(input);
    let infeasibility = s.phase1()?;
    Ok(Phase1 { infeasibility })
}

/// Solves the LP; `feas_tol` is the phase-1 threshold for declaring emptiness.
pub(crate) fn solve(input: &LpInput<'_>, cost: &[f64], feas_tol: f64) -> Result<Vec<f64>> {
    let mut s = build(input);
    let infeasibility = s.phase1()?;
    if infeasibility > feas_tol {
        return Err(Error::Infeasible);
    }
    s.drive_out_artificials();
    s.phase2(cost)?;
    Ok(s.primal())
}
