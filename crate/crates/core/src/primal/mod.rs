//! Super-replication pricing on a scenario tree.
//!
//! Two backends compute the smallest initial capital whose worst-case
//! terminal wealth dominates the payoff: an exact LP for piecewise-linear
//! costs and a holding-grid dynamic program for general convex costs.

pub(crate) mod dp;
mod lp;

pub use dp::{solve_primal_dp, GridConfig};
pub use lp::{solve_primal_lp, LpCertificate};

use crate::costs::CostSpec;
use crate::error::{EngineError, Result};
use crate::lattice::{LatticeModel, ModelParams, ScenarioPath};
use crate::payoff::PayoffSpec;

/// An adapted trading strategy: initial capital plus per-node holdings.
#[derive(Debug, Clone)]
pub struct Strategy {
    pub initial_capital: f64,
    /// `holdings[n][node_id]` for levels `0..N`; the pre-trade position is
    /// the parent's holding, zero at the root.
    pub holdings: Vec<Vec<f64>>,
}

/// Mark-to-market wealth at every node of the tree.
#[derive(Debug, Clone)]
pub struct WealthLedger {
    /// `values[n][node_id]` for levels `0..=N`.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Dp,
    Lp,
}

/// Price record emitted to the CLI.
#[derive(Debug, Clone)]
pub struct PriceReport {
    pub value: f64,
    pub backend: Backend,
    pub grid_error_bound: f64,
    pub solver_iterations: usize,
}

/// Uniform bound on optimal holdings: capital `A` cannot support larger
/// positions without risking default somewhere on the tree.
pub fn apriori_bound(params: &ModelParams, capital: f64) -> Result<f64> {
    params.validate()?;
    if !(capital > 0.0) {
        return Err(EngineError::Parameter(format!("capital bound must be > 0, got {capital}")));
    }
    let sh = params.sigma_high;
    if sh == 0.0 {
        return Err(EngineError::Degenerate("sigma_high = 0 admits no price moves".into()));
    }
    let n = params.periods as f64;
    Ok(capital * (1.0 + sh.exp()).powf(n) / ((1.0 - (-sh).exp()) * params.s0 * (-sh * n).exp()))
}

/// Wealth of a strategy played on the tree itself: cost charged at the
/// parent node, the same amount down every child.
pub fn build_ledger(tree: &LatticeModel, strategy: &Strategy, cost: &CostSpec) -> Result<WealthLedger> {
    let n_periods = tree.periods();
    if strategy.holdings.len() != n_periods {
        return Err(EngineError::Shape(format!(
            "strategy has {} holding levels, tree has {} periods",
            strategy.holdings.len(),
            n_periods
        )));
    }
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(n_periods + 1);
    values.push(vec![strategy.initial_capital]);
    for n in 0..n_periods {
        if strategy.holdings[n].len() != tree.levels[n].len() {
            return Err(EngineError::Shape(format!("holding count mismatch at level {n}")));
        }
        let mut next = vec![0.0; tree.levels[n + 1].len()];
        for (id, node) in tree.levels[n].iter().enumerate() {
            let gamma = strategy.holdings[n][id];
            let gamma_prev = node
                .parent
                .map(|p| strategy.holdings[n - 1][p])
                .unwrap_or(0.0);
            let hist = tree.price_prefix(n, id);
            let charge = cost.evaluate(n, &hist, (gamma - gamma_prev) * node.stock);
            let y = values[n][id];
            for child_id in tree.children_ids(id) {
                let s_child = tree.levels[n + 1][child_id].stock;
                next[child_id] = y + gamma * (s_child - node.stock) - charge;
            }
        }
        values.push(next);
    }
    Ok(WealthLedger { values })
}

/// Outcome of playing a tree strategy against off-tree scenarios.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub min_slack: f64,
    pub violations: usize,
    pub scenarios: usize,
}

/// Plays the strategy on each scenario: holdings are read from the node of
/// the projected path, wealth is marked with the true scenario prices and
/// the true scenario-dependent costs.
pub fn verify_superreplication(
    strategy: &Strategy,
    cost: &CostSpec,
    payoff: &PayoffSpec,
    scenarios: &[ScenarioPath],
    tree: &LatticeModel,
) -> Result<VerifyReport> {
    let params = &tree.params;
    let b = tree.num_branches();
    let mut min_slack = f64::INFINITY;
    let mut violations = 0usize;
    for path in scenarios {
        path.check_membership(params.sigma_low, params.sigma_high)?;
        if path.returns.len() != tree.periods() {
            return Err(EngineError::Shape("scenario length does not match the tree".into()));
        }
        let mut y = strategy.initial_capital;
        let mut gamma_prev = 0.0;
        let mut node_id = 0usize;
        for (n, &x) in path.returns.iter().enumerate() {
            let projected = tree
                .branches
                .floor(x)
                .ok_or_else(|| EngineError::Domain(format!("return {x} below the grid")))?;
            let j = tree
                .branches
                .values()
                .iter()
                .position(|&v| v == projected)
                .expect("floor returns a grid value");
            let gamma = strategy.holdings[n][node_id];
            let s_n = path.prices[n];
            let charge = cost.evaluate(n, &path.prices[..=n], (gamma - gamma_prev) * s_n);
            y += gamma * (path.prices[n + 1] - s_n) - charge;
            gamma_prev = gamma;
            node_id = node_id * b + j;
        }
        let slack = y - payoff.evaluate(&path.prices)?;
        if slack < 0.0 {
            violations += 1;
        }
        min_slack = min_slack.min(slack);
    }
    Ok(VerifyReport { min_slack, violations, scenarios: scenarios.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_tree;
    use approx::assert_abs_diff_eq;

    fn binomial_ln2() -> ModelParams {
        ModelParams::new(1.0, 1, std::f64::consts::LN_2, std::f64::consts::LN_2, 1)
    }

    #[test]
    fn apriori_bound_example() {
        let p = binomial_ln2();
        assert_abs_diff_eq!(apriori_bound(&p, 1.0).unwrap(), 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(apriori_bound(&p, 2.0).unwrap(), 24.0, epsilon = 1e-12);
        let degenerate = ModelParams::new(1.0, 1, 0.0, 0.0, 1);
        assert!(apriori_bound(&degenerate, 1.0).is_err());
        let tiny = ModelParams::new(1.0, 1, 0.0, 1e-9, 1);
        assert!(apriori_bound(&tiny, 1.0).unwrap() > 1e8);
    }

    #[test]
    fn ledger_one_step_identity() {
        let tree = build_tree(&binomial_ln2()).unwrap();
        let cost = CostSpec::proportional(0.1).unwrap();
        let strategy = Strategy { initial_capital: 0.4, holdings: vec![vec![2.0 / 3.0]] };
        let ledger = build_ledger(&tree, &strategy, &cost).unwrap();
        // Y_1 = 0.4 + (2/3)(S_1 - 1) - 0.1*(2/3)
        let charge = 0.1 * 2.0 / 3.0;
        for (id, node) in tree.leaves().iter().enumerate() {
            let expect = 0.4 + 2.0 / 3.0 * (node.stock - 1.0) - charge;
            assert_abs_diff_eq!(ledger.values[1][id], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn verification_on_tree_paths_matches_ledger() {
        let tree = build_tree(&binomial_ln2()).unwrap();
        let cost = CostSpec::zero();
        let payoff = PayoffSpec::call(1.0).unwrap();
        // exact binomial replication: y = 1/3, gamma = 2/3
        let strategy = Strategy { initial_capital: 1.0 / 3.0, holdings: vec![vec![2.0 / 3.0]] };
        let scenarios: Vec<_> = (0..tree.leaves().len()).map(|l| tree.leaf_scenario(l)).collect();
        let report = verify_superreplication(&strategy, &cost, &payoff, &scenarios, &tree).unwrap();
        assert!(report.min_slack >= -1e-9, "slack {}", report.min_slack);
        assert_eq!(report.violations, 0);
    }
}
