//! Dense two-phase primal simplex for standard-form programs
//! `min c'x  s.t.  Ax = b, x >= 0`.
//!
//! Small by design: the pricing LPs stay in the low hundreds of rows and
//! columns, so a dense tableau with deterministic pivoting is both fast
//! enough and easy to certify. Dantzig pricing with a smallest-index ratio
//! tie-break; falls over to Bland's rule after a fixed iteration budget to
//! rule out cycling. Dual multipliers are read off the artificial columns.

use crate::error::{EngineError, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct StandardLp {
    /// Row-major constraint matrix, `m x n`.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// One multiplier per equality row.
    pub dual: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    /// `m` rows of `n + m + 1` entries (structural, artificial, rhs).
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n: usize,
    m: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.n + self.m]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, p) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        self.basis[row] = col;
    }
}

/// Reduced costs for objective `obj` over allowed columns; returns the
/// entering column or None at optimality. `price` carries the simplex
/// multipliers for `obj` on exit.
fn entering(
    t: &Tableau,
    obj: &[f64],
    allowed: usize,
    bland: bool,
    price: &mut Vec<f64>,
) -> Option<usize> {
    // y' = c_B B^-1 recovered from the artificial columns
    for i in 0..t.m {
        let mut y = 0.0;
        for (r, &bi) in t.basis.iter().enumerate() {
            y += obj.get(bi).copied().unwrap_or(0.0) * t.rows[r][t.n + i];
        }
        price[i] = y;
    }
    // reduced cost of column j against the current basis: c_j - c_B (B^-1 A_j),
    // where B^-1 A_j is exactly the updated tableau column
    let cb: Vec<f64> = t.basis.iter().map(|&b| obj.get(b).copied().unwrap_or(0.0)).collect();
    let mut best: Option<(usize, f64)> = None;
    for j in 0..allowed {
        if t.basis.contains(&j) {
            continue;
        }
        let mut red = obj.get(j).copied().unwrap_or(0.0);
        for i in 0..t.m {
            red -= cb[i] * t.rows[i][j];
        }
        if red < -EPS {
            if bland {
                return Some(j);
            }
            if best.map_or(true, |(_, b)| red < b) {
                best = Some((j, red));
            }
        }
    }
    best.map(|(j, _)| j)
}

fn ratio_test(t: &Tableau, col: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..t.m {
        let a = t.rows[i][col];
        if a > EPS {
            let ratio = t.rhs(i) / a;
            match best {
                None => best = Some((i, ratio)),
                Some((bi, br)) => {
                    // smallest ratio; ties to the smallest basis index for determinism
                    if ratio < br - EPS || (ratio < br + EPS && t.basis[i] < t.basis[bi]) {
                        best = Some((i, ratio));
                    }
                }
            }
        }
    }
    best.map(|(i, _)| i)
}

fn run_phase(t: &mut Tableau, obj: &[f64], allowed: usize) -> Result<(usize, Vec<f64>)> {
    let mut price = vec![0.0; t.m];
    let budget = 50 * (t.n + t.m).max(20);
    let bland_after = 10 * (t.n + t.m).max(20);
    for it in 0..budget {
        let bland = it >= bland_after;
        match entering(t, obj, allowed, bland, &mut price) {
            None => return Ok((it, price)),
            Some(col) => match ratio_test(t, col) {
                None => {
                    return Err(EngineError::Internal(
                        "linear program unbounded; the pricing model forbids this".into(),
                    ))
                }
                Some(row) => t.pivot(row, col),
            },
        }
    }
    Err(EngineError::Internal("simplex iteration budget exhausted".into()))
}

pub fn solve(lp: &StandardLp) -> Result<LpSolution> {
    let m = lp.a.len();
    let n = lp.c.len();
    if lp.b.len() != m || lp.a.iter().any(|r| r.len() != n) {
        return Err(EngineError::Shape("inconsistent LP dimensions".into()));
    }
    if m == 0 {
        return Err(EngineError::Shape("LP needs at least one constraint".into()));
    }
    // build the phase-1 tableau with nonnegative rhs and an artificial basis
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let flip = if lp.b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut r = vec![0.0; n + m + 1];
        for j in 0..n {
            r[j] = flip * lp.a[i][j];
        }
        r[n + i] = 1.0;
        r[n + m] = flip * lp.b[i];
        rows.push(r);
    }
    let basis = (n..n + m).collect();
    let mut t = Tableau { rows, basis, n, m };

    // phase 1: minimize the sum of artificials (columns n..n+m have cost 1)
    let mut phase1_obj = vec![0.0; n + m];
    for j in n..n + m {
        phase1_obj[j] = 1.0;
    }
    let (it1, _) = run_phase(&mut t, &phase1_obj, n + m)?;
    let infeasibility: f64 =
        t.basis.iter().enumerate().filter(|(_, &b)| b >= n).map(|(i, _)| t.rhs(i)).sum();
    if infeasibility > 1e-7 {
        return Err(EngineError::Internal(format!(
            "linear program infeasible (phase-1 residual {infeasibility:.3e})"
        )));
    }
    // drive any residual artificials out of the basis where possible
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !t.basis.contains(&j) && t.rows[i][j].abs() > EPS) {
                t.pivot(i, j);
            }
            // a fully zero row is a redundant constraint; the artificial
            // stays basic at level 0, which is harmless
        }
    }

    // phase 2 over structural columns only
    let (it2, price) = run_phase(&mut t, &lp.c, n)?;

    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(i);
        }
    }
    let objective = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    // undo the rhs sign flips in the multipliers
    let dual = (0..m).map(|i| if lp.b[i] < 0.0 { -price[i] } else { price[i] }).collect();
    Ok(LpSolution { x, dual, objective, iterations: it1 + it2 })
}
