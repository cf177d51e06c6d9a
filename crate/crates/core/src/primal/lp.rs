//! Exact linear-programming backend for piecewise-linear costs.
//!
//! The pricing problem
//!   min y  s.t.  (leaf l)   y + sum_n gamma_{v_n} dS - sum_n t_{v_n} >= F_l
//!                (piece v,i) t_v - s_i S_v (gamma_v - gamma_parent) >= c_i
//! is solved through its dual, which is already in standard form: one
//! equality row per primal variable, all dual variables nonnegative. The
//! leaf multipliers lambda_l then read off directly as the optimal measure's
//! path weights, and the row multipliers recover (y, gamma, t).

use crate::costs::CostSpec;
use crate::error::{EngineError, Result};
use crate::lattice::LatticeModel;
use crate::payoff::PayoffSpec;
use crate::simplex::{solve, StandardLp};

use super::{build_ledger, Backend, PriceReport, Strategy, WealthLedger};

#[derive(Debug, Clone)]
pub struct LpCertificate {
    /// Optimal dual weight per leaf (path probabilities up to normalization).
    pub leaf_weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Total leaf mass fell below threshold and the weights are unusable.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub strategy: Strategy,
    pub ledger: WealthLedger,
    pub certificate: LpCertificate,
    pub report: PriceReport,
}

/// Global node numbering: internal nodes only, level by level.
fn internal_index(tree: &LatticeModel) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(tree.periods());
    let mut total = 0usize;
    for n in 0..tree.periods() {
        offsets.push(total);
        total += tree.levels[n].len();
    }
    (offsets, total)
}

pub fn solve_primal_lp(
    tree: &LatticeModel,
    cost: &CostSpec,
    payoff: &PayoffSpec,
) -> Result<LpSolution> {
    let pieces = cost.max_affine_pieces().ok_or_else(|| {
        EngineError::Parameter(
            "LP backend requires a piecewise-linear cost (zero, proportional or piecewise_linear)"
                .into(),
        )
    })?;
    let n_periods = tree.periods();
    let (offsets, n_internal) = internal_index(tree);
    let n_leaves = tree.leaves().len();
    let n_pieces = pieces.len();

    // rows: y, then gamma per internal node, then t per internal node
    let row_y = 0usize;
    let row_gamma = |g: usize| 1 + g;
    let row_t = |g: usize| 1 + n_internal + g;
    let m = 1 + 2 * n_internal;
    // columns: lambda per leaf, then mu per (internal node, piece)
    let col_lambda = |l: usize| l;
    let col_mu = |g: usize, i: usize| n_leaves + g * n_pieces + i;
    let n_cols = n_leaves + n_internal * n_pieces;

    let mut a = vec![vec![0.0; n_cols]; m];
    let mut c = vec![0.0; n_cols];
    let mut b = vec![0.0; m];
    b[row_y] = 1.0;

    for l in 0..n_leaves {
        let path = tree.leaf_scenario(l);
        c[col_lambda(l)] = -payoff.evaluate(&path.prices)?;
        a[row_y][col_lambda(l)] = 1.0;
        // walk the ancestry: digits give the node ids at each level
        let digits = tree.leaf_branch_indices(l);
        let bfac = tree.num_branches();
        let mut id = 0usize;
        for (n, &d) in digits.iter().enumerate() {
            let g = offsets[n] + id;
            let next_id = id * bfac + d;
            let ds = tree.levels[n + 1][next_id].stock - tree.levels[n][id].stock;
            a[row_gamma(g)][col_lambda(l)] += ds;
            a[row_t(g)][col_lambda(l)] -= 1.0;
            id = next_id;
        }
    }
    for n in 0..n_periods {
        for id in 0..tree.levels[n].len() {
            let g = offsets[n] + id;
            let s = tree.levels[n][id].stock;
            for (i, &(slope, intercept)) in pieces.iter().enumerate() {
                let col = col_mu(g, i);
                c[col] = -intercept;
                a[row_t(g)][col] += 1.0;
                a[row_gamma(g)][col] -= slope * s;
                if n > 0 {
                    let parent = tree.levels[n][id].parent.expect("non-root has a parent");
                    let pg = offsets[n - 1] + parent;
                    a[row_gamma(pg)][col] += slope * s;
                }
            }
        }
    }

    let sol = solve(&StandardLp { a, b, c })?;
    let value = -sol.objective;

    let mut holdings: Vec<Vec<f64>> = Vec::with_capacity(n_periods);
    for n in 0..n_periods {
        holdings.push(
            (0..tree.levels[n].len()).map(|id| -sol.dual[row_gamma(offsets[n] + id)]).collect(),
        );
    }
    let y = -sol.dual[row_y];
    if (y - value).abs() > 1e-6 * (1.0 + value.abs()) {
        return Err(EngineError::Contract(format!(
            "LP multiplier for the capital row ({y}) disagrees with the optimum ({value})"
        )));
    }
    let strategy = Strategy { initial_capital: value, holdings };
    let ledger = build_ledger(tree, &strategy, cost)?;

    let leaf_weights: Vec<f64> = (0..n_leaves).map(|l| sol.x[col_lambda(l)].max(0.0)).collect();
    let mass: f64 = leaf_weights.iter().sum();
    let certificate = LpCertificate {
        leaf_weights,
        objective: value,
        iterations: sol.iterations,
        degenerate: mass < 1e-12,
    };
    Ok(LpSolution {
        value,
        strategy,
        ledger,
        certificate,
        report: PriceReport {
            value,
            backend: Backend::Lp,
            grid_error_bound: 0.0,
            solver_iterations: sol.iterations,
        },
    })
}
