//! Discrete path spaces and their multinomial scenario trees.
//!
//! The scenario set is all return vectors whose per-period log-return
//! magnitudes lie in `[sigma_low, sigma_high]`. Finite approximations are
//! full non-recombining trees over a grid of admissible magnitudes;
//! recombination is deliberately not used because costs may depend on the
//! whole price history, so every node is identified with its path prefix.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// Absolute tolerance for membership tests on log-returns. Inputs arrive
/// through exp/log round-trips, so exact comparisons are too strict.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Default cap on the number of leaves of a full scenario tree.
pub const DEFAULT_NODE_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Initial stock price, > 0.
    pub s0: f64,
    /// Number of trading periods.
    pub periods: usize,
    /// Lower bound on per-period |log-return|.
    pub sigma_low: f64,
    /// Upper bound on per-period |log-return|.
    pub sigma_high: f64,
    /// Refinement level of the magnitude grid (k >= 1).
    pub refinement: usize,
}

impl ModelParams {
    pub fn new(s0: f64, periods: usize, sigma_low: f64, sigma_high: f64, refinement: usize) -> Self {
        ModelParams { s0, periods, sigma_low, sigma_high, refinement }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0) {
            return Err(EngineError::Parameter(format!("s0 must be positive, got {}", self.s0)));
        }
        if self.periods == 0 {
            return Err(EngineError::Parameter("periods must be >= 1".into()));
        }
        if !(0.0 <= self.sigma_low && self.sigma_low <= self.sigma_high) {
            return Err(EngineError::Parameter(format!(
                "need 0 <= sigma_low <= sigma_high, got [{}, {}]",
                self.sigma_low, self.sigma_high
            )));
        }
        if !self.sigma_high.is_finite() {
            return Err(EngineError::Parameter("sigma_high must be finite".into()));
        }
        if self.refinement == 0 {
            return Err(EngineError::Parameter("refinement level must be >= 1".into()));
        }
        Ok(())
    }

    /// Same bounds collapsed onto the binomial model with maximal volatility.
    pub fn binomial_high(&self) -> ModelParams {
        ModelParams { sigma_low: self.sigma_high, refinement: 1, ..*self }
    }
}

/// Ordered set of admissible one-period log-returns.
///
/// The magnitudes are `(j/k) sigma_low + (1 - j/k) sigma_high` for
/// `j = 0..=k`, taken with both signs and deduplicated (duplicates arise
/// when `sigma_low = 0` or `sigma_low = sigma_high`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet {
    values: Vec<f64>,
}

impl BranchSet {
    pub fn from_params(params: &ModelParams) -> BranchSet {
        let k = params.refinement;
        let mut values = Vec::with_capacity(2 * (k + 1));
        for j in 0..=k {
            let t = j as f64 / k as f64;
            let mag = t * params.sigma_low + (1.0 - t) * params.sigma_high;
            values.push(mag);
            values.push(-mag);
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup_by(|a, b| (*a - *b).abs() <= MEMBERSHIP_TOL);
        BranchSet { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Largest grid value `<= x` (up to the membership tolerance).
    pub fn floor(&self, x: f64) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|&v| v <= x + MEMBERSHIP_TOL)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Period index, 0..=N.
    pub time: usize,
    /// Canonical index within the level: mixed-radix over branch indices,
    /// most significant digit first (earliest period).
    pub node_id: usize,
    /// Stock price at the node.
    pub stock: f64,
    /// Parent id at the previous level; absent at the root.
    pub parent: Option<usize>,
    /// Which branch value led here (index into the branch set).
    pub branch_index: usize,
}

/// Full non-recombining scenario tree over a branch set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeModel {
    pub params: ModelParams,
    pub branches: BranchSet,
    /// Level-indexed node arrays; `levels[n]` has `|branches|^n` nodes.
    pub levels: Vec<Vec<TreeNode>>,
}

impl LatticeModel {
    pub fn periods(&self) -> usize {
        self.params.periods
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn node(&self, time: usize, node_id: usize) -> &TreeNode {
        &self.levels[time][node_id]
    }

    pub fn children_ids(&self, node_id: usize) -> std::ops::Range<usize> {
        let b = self.num_branches();
        node_id * b..(node_id + 1) * b
    }

    pub fn leaves(&self) -> &[TreeNode] {
        &self.levels[self.periods()]
    }

    /// Prices along the path from the root to `(time, node_id)`, inclusive.
    pub fn price_prefix(&self, time: usize, node_id: usize) -> Vec<f64> {
        let mut prices = vec![0.0; time + 1];
        let mut id = node_id;
        for n in (0..=time).rev() {
            prices[n] = self.levels[n][id].stock;
            id = self.levels[n][id].parent.unwrap_or(0);
        }
        prices
    }

    /// Branch indices along the path to a leaf, earliest period first.
    pub fn leaf_branch_indices(&self, leaf_id: usize) -> Vec<usize> {
        let b = self.num_branches();
        let n = self.periods();
        let mut digits = vec![0usize; n];
        let mut id = leaf_id;
        for d in (0..n).rev() {
            digits[d] = id % b;
            id /= b;
        }
        digits
    }

    /// The scenario corresponding to a leaf.
    pub fn leaf_scenario(&self, leaf_id: usize) -> ScenarioPath {
        let returns: Vec<f64> = self
            .leaf_branch_indices(leaf_id)
            .into_iter()
            .map(|j| self.branches.values()[j])
            .collect();
        ScenarioPath::from_returns(self.params.s0, &returns)
    }

    /// Leaf id of a tree scenario; errors if a coordinate is off the grid.
    pub fn leaf_id_of(&self, path: &ScenarioPath) -> Result<usize> {
        let b = self.num_branches();
        let mut id = 0usize;
        for &x in &path.returns {
            let j = self
                .branches
                .values()
                .iter()
                .position(|&v| (v - x).abs() <= MEMBERSHIP_TOL)
                .ok_or_else(|| EngineError::Domain(format!("return {x} not on the tree grid")))?;
            id = id * b + j;
        }
        Ok(id)
    }

    /// Structured text dump for debugging: levels -> nodes.
    pub fn to_debug_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialization")
    }
}

/// A scenario: per-period log-returns plus the induced price path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPath {
    pub returns: Vec<f64>,
    /// `prices[n] = s0 * exp(sum of returns[..n])`, length `N + 1`.
    pub prices: Vec<f64>,
}

impl ScenarioPath {
    pub fn from_returns(s0: f64, returns: &[f64]) -> ScenarioPath {
        let mut prices = Vec::with_capacity(returns.len() + 1);
        let mut s = s0;
        prices.push(s);
        for &x in returns {
            s *= x.exp();
            prices.push(s);
        }
        ScenarioPath { returns: returns.to_vec(), prices }
    }

    /// Membership in the path space for the given bounds.
    pub fn check_membership(&self, sigma_low: f64, sigma_high: f64) -> Result<()> {
        for (n, &x) in self.returns.iter().enumerate() {
            let m = x.abs();
            if m < sigma_low - MEMBERSHIP_TOL || m > sigma_high + MEMBERSHIP_TOL {
                return Err(EngineError::Domain(format!(
                    "return {} at period {} outside [{}, {}] band",
                    x,
                    n + 1,
                    sigma_low,
                    sigma_high
                )));
            }
        }
        Ok(())
    }
}

/// Builds the full non-recombining tree of depth `params.periods`.
pub fn build_tree(params: &ModelParams) -> Result<LatticeModel> {
    build_tree_with_budget(params, DEFAULT_NODE_BUDGET)
}

pub fn build_tree_with_budget(params: &ModelParams, leaf_budget: u64) -> Result<LatticeModel> {
    params.validate()?;
    let branches = BranchSet::from_params(params);
    let b = branches.len() as u64;
    let mut leaves: u64 = 1;
    for _ in 0..params.periods {
        leaves = leaves.checked_mul(b).unwrap_or(u64::MAX);
        if leaves > leaf_budget {
            return Err(EngineError::Capacity(format!(
                "tree would have more than {leaf_budget} leaves ({b}^{})",
                params.periods
            )));
        }
    }

    let mut levels: Vec<Vec<TreeNode>> = Vec::with_capacity(params.periods + 1);
    levels.push(vec![TreeNode {
        time: 0,
        node_id: 0,
        stock: params.s0,
        parent: None,
        branch_index: 0,
    }]);
    for n in 0..params.periods {
        let prev = &levels[n];
        let mut next = Vec::with_capacity(prev.len() * branches.len());
        for parent in prev {
            for (j, &x) in branches.values().iter().enumerate() {
                next.push(TreeNode {
                    time: n + 1,
                    node_id: parent.node_id * branches.len() + j,
                    stock: parent.stock * x.exp(),
                    parent: Some(parent.node_id),
                    branch_index: j,
                });
            }
        }
        levels.push(next);
    }
    Ok(LatticeModel { params: *params, branches, levels })
}

/// Coordinate-wise floor projection of a scenario onto the tree grid.
pub fn project_scenario(path: &ScenarioPath, tree: &LatticeModel) -> Result<ScenarioPath> {
    path.check_membership(tree.params.sigma_low, tree.params.sigma_high)?;
    let projected: Vec<f64> = path
        .returns
        .iter()
        .map(|&x| {
            tree.branches
                .floor(x)
                .ok_or_else(|| EngineError::Domain(format!("no grid value below return {x}")))
        })
        .collect::<Result<_>>()?;
    Ok(ScenarioPath::from_returns(tree.params.s0, &projected))
}

/// Deterministic scenario sampling: random sign, magnitude uniform on the band.
pub fn sample_scenarios(params: &ModelParams, count: usize, seed: u64) -> Result<Vec<ScenarioPath>> {
    params.validate()?;
    if count == 0 {
        return Err(EngineError::Parameter("scenario count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let returns: Vec<f64> = (0..params.periods)
            .map(|_| {
                let mag = if params.sigma_low == params.sigma_high {
                    params.sigma_high
                } else {
                    rng.gen_range(params.sigma_low..=params.sigma_high)
                };
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                sign * mag
            })
            .collect();
        out.push(ScenarioPath::from_returns(params.s0, &returns));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn binomial_branch_set_collapses() {
        let p = ModelParams::new(1.0, 1, LN2, LN2, 1);
        let b = BranchSet::from_params(&p);
        assert_eq!(b.values(), &[-LN2, LN2]);
        let tree = build_tree(&p).unwrap();
        let mut leaves: Vec<f64> = tree.leaves().iter().map(|n| n.stock).collect();
        leaves.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(leaves[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(leaves[1], 2.0, max_relative = 1e-14);
    }

    #[test]
    fn k1_grid_has_four_branches() {
        let p = ModelParams::new(1.0, 1, 0.1, 0.2, 1);
        let b = BranchSet::from_params(&p);
        assert_eq!(b.values(), &[-0.2, -0.1, 0.1, 0.2]);
        let tree = build_tree(&p).unwrap();
        assert_eq!(tree.leaves().len(), 4);
    }

    #[test]
    fn zero_sigma_low_dedupes_zero() {
        let p = ModelParams::new(1.0, 2, 0.0, 0.2, 1);
        let b = BranchSet::from_params(&p);
        assert_eq!(b.values(), &[-0.2, 0.0, 0.2]);
        let tree = build_tree(&p).unwrap();
        assert_eq!(tree.leaves().len(), 9);
    }

    #[test]
    fn branch_counts_by_enumeration() {
        for k in 1..=5usize {
            let p = ModelParams::new(1.0, 1, 0.1, 0.2, k);
            assert_eq!(BranchSet::from_params(&p).len(), 2 * (k + 1));
            // sigma_low = sigma_high collapses everything to two values
            let p2 = ModelParams::new(1.0, 1, 0.2, 0.2, k);
            assert_eq!(BranchSet::from_params(&p2).len(), 2);
        }
    }

    #[test]
    fn stock_prices_match_return_products() {
        let p = ModelParams::new(1.3, 3, 0.05, 0.21, 2);
        let tree = build_tree(&p).unwrap();
        for (leaf_id, leaf) in tree.leaves().iter().enumerate() {
            let scen = tree.leaf_scenario(leaf_id);
            assert_relative_eq!(scen.prices[3], leaf.stock, max_relative = 1e-14);
            // recompute from the root product
            let manual = 1.3 * scen.returns.iter().sum::<f64>().exp();
            assert_relative_eq!(manual, leaf.stock, max_relative = 1e-14);
        }
    }

    #[test]
    fn projection_floor_rule() {
        let p = ModelParams::new(1.0, 1, 0.1, 0.2, 1);
        let tree = build_tree(&p).unwrap();
        let proj = |x: f64| {
            project_scenario(&ScenarioPath::from_returns(1.0, &[x]), &tree).unwrap().returns[0]
        };
        assert_eq!(proj(0.17), 0.1);
        assert_eq!(proj(0.1), 0.1);
        assert_eq!(proj(-0.17), -0.2);
        assert_eq!(proj(0.2), 0.2);
    }

    #[test]
    fn projection_rejects_out_of_band() {
        let p = ModelParams::new(1.0, 1, 0.1, 0.2, 1);
        let tree = build_tree(&p).unwrap();
        let r = project_scenario(&ScenarioPath::from_returns(1.0, &[0.05]), &tree);
        assert!(matches!(r, Err(EngineError::Domain(_))));
    }

    #[test]
    fn projection_idempotent_and_within_mesh() {
        let p = ModelParams::new(1.0, 4, 0.1, 0.3, 3);
        let tree = build_tree_with_budget(&p, 10_000).unwrap();
        let mesh = (0.3 - 0.1) / 3.0;
        for path in sample_scenarios(&p, 50, 11).unwrap() {
            let proj = project_scenario(&path, &tree).unwrap();
            let proj2 = project_scenario(&proj, &tree).unwrap();
            assert_eq!(proj.returns, proj2.returns);
            for (a, b) in path.returns.iter().zip(&proj.returns) {
                assert!((a - b).abs() <= mesh + 1e-12);
            }
        }
    }

    #[test]
    fn mesh_halving_shrinks_price_gap() {
        let p1 = ModelParams::new(1.0, 4, 0.1, 0.3, 2);
        let p2 = ModelParams { refinement: 4, ..p1 };
        let t1 = build_tree_with_budget(&p1, 100_000).unwrap();
        let t2 = build_tree_with_budget(&p2, 100_000).unwrap();
        let sample = sample_scenarios(&p1, 200, 5).unwrap();
        let worst_gap = |tree: &LatticeModel| {
            sample
                .iter()
                .map(|path| {
                    let proj = project_scenario(path, tree).unwrap();
                    path.prices
                        .iter()
                        .zip(&proj.prices)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0f64, f64::max)
                })
                .fold(0.0f64, f64::max)
        };
        let g1 = worst_gap(&t1);
        let g2 = worst_gap(&t2);
        // mesh halving at least halves the worst-case gap, up to slack 1.2
        assert!(g2 <= 1.2 * g1 / 2.0, "g1={g1} g2={g2}");
    }

    #[test]
    fn node_budget_enforced() {
        let p = ModelParams::new(1.0, 30, 0.1, 0.2, 1);
        assert!(matches!(build_tree(&p), Err(EngineError::Capacity(_))));
    }

    #[test]
    fn sampling_deterministic_and_in_band() {
        let p = ModelParams::new(1.0, 3, 0.1, 0.2, 1);
        let a = sample_scenarios(&p, 3, 7).unwrap();
        let b = sample_scenarios(&p, 3, 7).unwrap();
        assert_eq!(a, b);
        for path in sample_scenarios(&p, 10_000, 9).unwrap() {
            path.check_membership(0.1, 0.2).unwrap();
        }
        // degenerate band
        let pd = ModelParams::new(1.0, 3, 0.2, 0.2, 1);
        for path in sample_scenarios(&pd, 100, 3).unwrap() {
            for x in path.returns {
                assert_eq!(x.abs(), 0.2);
            }
        }
    }

    #[test]
    fn leaf_id_roundtrip() {
        let p = ModelParams::new(1.0, 3, 0.1, 0.2, 2);
        let tree = build_tree(&p).unwrap();
        for leaf_id in 0..tree.leaves().len() {
            let scen = tree.leaf_scenario(leaf_id);
            assert_eq!(tree.leaf_id_of(&scen).unwrap(), leaf_id);
        }
    }
}
