//! Reduction of the band model to the extreme binomial model for convex
//! payoffs under deterministic costs: any admissible return decomposes
//! uniquely into the two extreme returns, and a binomial super-replicating
//! strategy aggregates along those weights into one on the full band.

use crate::costs::CostSpec;
use crate::error::{EngineError, Result};
use crate::lattice::{build_tree, sample_scenarios, LatticeModel, ModelParams, ScenarioPath};
use crate::payoff::PayoffSpec;
use crate::primal::{solve_primal_dp, GridConfig, Strategy};

/// Exact word enumeration refuses beyond this depth.
pub const MAX_LIFT_PERIODS: usize = 20;

/// Per-period convex weights on the up/down extreme returns.
#[derive(Debug, Clone)]
pub struct LiftWeights {
    pub lambda_plus: Vec<f64>,
    pub sigma_high: f64,
}

/// Solves `e^{x} = lambda e^{sigma} + (1 - lambda) e^{-sigma}` per period.
pub fn compute_weights(path: &ScenarioPath, sigma_high: f64) -> Result<LiftWeights> {
    if !(sigma_high > 0.0) {
        return Err(EngineError::Parameter("sigma_high must be > 0".into()));
    }
    let up = sigma_high.exp();
    let down = (-sigma_high).exp();
    let mut lambda_plus = Vec::with_capacity(path.returns.len());
    for (n, &x) in path.returns.iter().enumerate() {
        if x.abs() > sigma_high + 1e-12 {
            return Err(EngineError::Domain(format!(
                "return {x} at period {} outside [-{sigma_high}, {sigma_high}]",
                n + 1
            )));
        }
        let l = ((x.exp() - down) / (up - down)).clamp(0.0, 1.0);
        lambda_plus.push(l);
    }
    Ok(LiftWeights { lambda_plus, sigma_high })
}

impl LiftWeights {
    /// Product weight of a sign word (bit = up move), periods `0..word.len()`.
    pub fn word_weight(&self, word: &[bool]) -> f64 {
        word.iter()
            .enumerate()
            .map(|(m, &up)| if up { self.lambda_plus[m] } else { 1.0 - self.lambda_plus[m] })
            .product()
    }
}

fn require_binomial(tree: &LatticeModel) -> Result<()> {
    if tree.num_branches() != 2 {
        return Err(EngineError::Shape(format!(
            "lifting needs the two-branch extreme tree, got {} branches",
            tree.num_branches()
        )));
    }
    Ok(())
}

/// Node id reached on the binomial tree by a sign word (branch 1 = up).
fn word_node(word_bits: usize, len: usize) -> usize {
    // bits are stored most-significant-first over `len` periods
    word_bits & ((1 << len) - 1)
}

/// Aggregated holding per period: the weighted average of the binomial
/// position values, read in shares of the scenario's actual price.
pub fn lift_strategy(
    bar_tree: &LatticeModel,
    bar_strategy: &Strategy,
    path: &ScenarioPath,
) -> Result<Vec<f64>> {
    require_binomial(bar_tree)?;
    let n_periods = bar_tree.periods();
    if n_periods > MAX_LIFT_PERIODS {
        return Err(EngineError::Capacity(format!(
            "word enumeration over {n_periods} periods exceeds the {MAX_LIFT_PERIODS}-period cap"
        )));
    }
    if path.returns.len() != n_periods {
        return Err(EngineError::Shape("scenario length does not match the tree".into()));
    }
    let weights = compute_weights(path, bar_tree.params.sigma_high)?;
    let mut gammas = Vec::with_capacity(n_periods);
    for n in 0..n_periods {
        let mut acc = 0.0;
        for word in 0..(1usize << n) {
            // interpret the word's bits as branch digits, earliest period in
            // the highest bit, matching the tree's mixed-radix node ids
            let node_id = word_node(word, n);
            let mut w = 1.0;
            for m in 0..n {
                let up = (word >> (n - 1 - m)) & 1 == 1;
                w *= if up { weights.lambda_plus[m] } else { 1.0 - weights.lambda_plus[m] };
            }
            let stock = bar_tree.levels[n][node_id].stock;
            acc += bar_strategy.holdings[n][node_id] * stock * w;
        }
        gammas.push(acc / path.prices[n]);
    }
    Ok(gammas)
}

/// Price reconstruction: the scenario price as the weighted sum of the
/// binomial prices over length-`n` words.
pub fn reconstruct_price(bar_tree: &LatticeModel, path: &ScenarioPath, n: usize) -> Result<f64> {
    require_binomial(bar_tree)?;
    let weights = compute_weights(path, bar_tree.params.sigma_high)?;
    let mut acc = 0.0;
    for word in 0..(1usize << n) {
        let mut w = 1.0;
        for m in 0..n {
            let up = (word >> (n - 1 - m)) & 1 == 1;
            w *= if up { weights.lambda_plus[m] } else { 1.0 - weights.lambda_plus[m] };
        }
        acc += bar_tree.levels[n][word_node(word, n)].stock * w;
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct Theorem22Row {
    pub refinement: usize,
    pub v_k: f64,
    pub gap: f64,
    pub grid_error: f64,
}

#[derive(Debug, Clone)]
pub struct Theorem22Report {
    pub v_bar: f64,
    pub v_bar_grid_error: f64,
    pub rows: Vec<Theorem22Row>,
    pub min_slack: f64,
    pub scenarios: usize,
}

/// Prices the payoff on the extreme binomial model, lifts the cushioned
/// optimal strategy to sampled band scenarios, and compares against the
/// refined-tree prices. Requires a deterministic cost and a payoff convex
/// in the price path, the hypotheses of the binomial-reduction theorem.
#[allow(clippy::too_many_arguments)]
pub fn theorem22_experiment(
    params: &ModelParams,
    cost: &CostSpec,
    payoff: &PayoffSpec,
    epsilon: f64,
    scenario_count: usize,
    seed: u64,
    refinements: &[usize],
    grid: &GridConfig,
) -> Result<Theorem22Report> {
    params.validate()?;
    if cost.is_path_dependent() {
        return Err(EngineError::Parameter(
            "binomial reduction requires a deterministic (history-independent) cost".into(),
        ));
    }
    if !payoff.convex_in_path() {
        return Err(EngineError::Parameter(
            "binomial reduction requires a payoff convex in the price path".into(),
        ));
    }
    if !(epsilon >= 0.0) {
        return Err(EngineError::Parameter("cushion must be >= 0".into()));
    }

    let bar_params = params.binomial_high();
    let bar_tree = build_tree(&bar_params)?;
    let bar = solve_primal_dp(&bar_tree, cost, payoff, grid)?;

    // pathwise verification of the lifted, cushioned strategy
    let scenarios = sample_scenarios(params, scenario_count, seed)?;
    let mut min_slack = f64::INFINITY;
    for path in &scenarios {
        let gammas = lift_strategy(&bar_tree, &bar.strategy, path)?;
        let mut y = bar.value + epsilon;
        let mut gamma_prev = 0.0;
        for (n, &gamma) in gammas.iter().enumerate() {
            let s = path.prices[n];
            let charge = cost.evaluate(n, &path.prices[..=n], (gamma - gamma_prev) * s);
            y += gamma * (path.prices[n + 1] - s) - charge;
            gamma_prev = gamma;
        }
        min_slack = min_slack.min(y - payoff.evaluate(&path.prices)?);
    }

    let mut rows = Vec::with_capacity(refinements.len());
    for &k in refinements {
        let tree = build_tree(&ModelParams { refinement: k, ..*params })?;
        let sol = solve_primal_dp(&tree, cost, payoff, grid)?;
        rows.push(Theorem22Row {
            refinement: k,
            v_k: sol.value,
            gap: (sol.value - bar.value).abs(),
            grid_error: sol.report.grid_error_bound,
        });
    }
    Ok(Theorem22Report {
        v_bar: bar.value,
        v_bar_grid_error: bar.report.grid_error_bound,
        rows,
        min_slack,
        scenarios: scenario_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bar_tree(n: usize, sigma: f64) -> LatticeModel {
        build_tree(&ModelParams::new(1.0, n, sigma, sigma, 1)).unwrap()
    }

    fn random_path(n: usize, sigma_low: f64, sigma_high: f64, rng: &mut ChaCha8Rng) -> ScenarioPath {
        let returns: Vec<f64> = (0..n)
            .map(|_| {
                let mag = rng.gen_range(sigma_low..=sigma_high);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        ScenarioPath::from_returns(1.0, &returns)
    }

    #[test]
    fn weight_extremes_and_midpoint() {
        let sigma = std::f64::consts::LN_2;
        let up = ScenarioPath::from_returns(1.0, &[sigma]);
        assert_abs_diff_eq!(compute_weights(&up, sigma).unwrap().lambda_plus[0], 1.0, epsilon = 1e-14);
        let down = ScenarioPath::from_returns(1.0, &[-sigma]);
        assert_abs_diff_eq!(compute_weights(&down, sigma).unwrap().lambda_plus[0], 0.0, epsilon = 1e-14);
        let mid = ScenarioPath::from_returns(1.0, &[0.0]);
        assert_abs_diff_eq!(
            compute_weights(&mid, sigma).unwrap().lambda_plus[0],
            1.0 / 3.0,
            epsilon = 1e-14
        );
        let outside = ScenarioPath::from_returns(1.0, &[1.0]);
        assert!(compute_weights(&outside, sigma).is_err());
    }

    #[test]
    fn reconstruction_identity_per_period() {
        // e^x = lambda e^s + (1-lambda) e^{-s} must hold exactly
        let sigma = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let path = random_path(4, 0.05, sigma, &mut rng);
            let w = compute_weights(&path, sigma).unwrap();
            for (n, &x) in path.returns.iter().enumerate() {
                let rebuilt = w.lambda_plus[n] * sigma.exp() + (1.0 - w.lambda_plus[n]) * (-sigma).exp();
                assert_abs_diff_eq!(rebuilt, x.exp(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn word_weights_sum_to_one() {
        let sigma = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in [1usize, 3, 8, 12] {
            let path = random_path(n, 0.05, sigma, &mut rng);
            let w = compute_weights(&path, sigma).unwrap();
            let mut total = 0.0;
            for word in 0..(1usize << n) {
                let bits: Vec<bool> = (0..n).map(|m| (word >> (n - 1 - m)) & 1 == 1).collect();
                total += w.word_weight(&bits);
            }
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn marginalization_over_suffixes() {
        // weight of a prefix word equals the sum over its full-length extensions
        let sigma = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 6;
        let path = random_path(n, 0.05, sigma, &mut rng);
        let w = compute_weights(&path, sigma).unwrap();
        for prefix_len in 0..=n {
            for prefix in 0..(1usize << prefix_len) {
                let pbits: Vec<bool> =
                    (0..prefix_len).map(|m| (prefix >> (prefix_len - 1 - m)) & 1 == 1).collect();
                let direct = w.word_weight(&pbits);
                let mut summed = 0.0;
                let suffix_len = n - prefix_len;
                for suffix in 0..(1usize << suffix_len) {
                    let mut bits = pbits.clone();
                    for m in 0..suffix_len {
                        bits.push((suffix >> (suffix_len - 1 - m)) & 1 == 1);
                    }
                    summed += w.word_weight(&bits);
                }
                assert_abs_diff_eq!(direct, summed, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn price_reconstruction() {
        let sigma = 0.2;
        let tree = bar_tree(5, sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let path = random_path(5, 0.05, sigma, &mut rng);
            for n in 0..=5 {
                let rebuilt = reconstruct_price(&tree, &path, n).unwrap();
                assert_abs_diff_eq!(
                    rebuilt / path.prices[n],
                    1.0,
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn extreme_path_recovers_binomial_strategy() {
        let sigma = 0.2;
        let tree = bar_tree(3, sigma);
        // arbitrary adapted holdings
        let holdings: Vec<Vec<f64>> = (0..3)
            .map(|n| (0..tree.levels[n].len()).map(|id| (n as f64 + 1.0) * 0.1 + id as f64).collect())
            .collect();
        let strategy = Strategy { initial_capital: 0.0, holdings: holdings.clone() };
        let all_up = ScenarioPath::from_returns(1.0, &[sigma; 3]);
        let lifted = lift_strategy(&tree, &strategy, &all_up).unwrap();
        // all-up node ids are all ones in binary: 0, 1, 3
        assert_abs_diff_eq!(lifted[0], holdings[0][0], epsilon = 1e-12);
        assert_abs_diff_eq!(lifted[1], holdings[1][1], epsilon = 1e-12);
        assert_abs_diff_eq!(lifted[2], holdings[2][3], epsilon = 1e-12);
    }

    #[test]
    fn two_period_hand_computation() {
        let sigma = std::f64::consts::LN_2;
        let tree = bar_tree(2, sigma);
        let holdings = vec![vec![0.7], vec![0.3, 0.9]]; // [down, up] at level 1
        let strategy = Strategy { initial_capital: 0.0, holdings };
        let flat = ScenarioPath::from_returns(1.0, &[0.0, 0.0]);
        let lifted = lift_strategy(&tree, &strategy, &flat).unwrap();
        assert_abs_diff_eq!(lifted[0], 0.7, epsilon = 1e-12);
        // gamma_1 = [(1-1/3)*(0.3 * 0.5) + (1/3)*(0.9 * 2)] / 1
        let expect = (2.0 / 3.0) * (0.3 * 0.5) + (1.0 / 3.0) * (0.9 * 2.0);
        assert_abs_diff_eq!(lifted[1], expect, epsilon = 1e-12);
    }

    #[test]
    fn refuses_oversized_and_mismatched_inputs() {
        let sigma = 0.2;
        let tree = bar_tree(2, sigma);
        let strategy = Strategy { initial_capital: 0.0, holdings: vec![vec![0.0], vec![0.0, 0.0]] };
        let short = ScenarioPath::from_returns(1.0, &[0.1]);
        assert!(lift_strategy(&tree, &strategy, &short).is_err());
        let wide = build_tree(&ModelParams::new(1.0, 2, 0.1, 0.2, 2)).unwrap();
        let path = ScenarioPath::from_returns(1.0, &[0.1, 0.1]);
        assert!(lift_strategy(&wide, &strategy, &path).is_err());
    }

    #[test]
    fn experiment_rejects_wrong_hypotheses() {
        let params = ModelParams::new(1.0, 1, 0.1, 0.2, 1);
        let grid = GridConfig::default();
        let stochastic = CostSpec::custom_fn(|_, h, b| b * b * h.len() as f64, true, "pathdep");
        let err = theorem22_experiment(
            &params,
            &stochastic,
            &PayoffSpec::call(1.0).unwrap(),
            1e-6,
            10,
            1,
            &[1],
            &grid,
        );
        assert!(err.is_err());
        let nonconvex = PayoffSpec::custom(|p| (p[p.len() - 1] - 1.0).abs().min(0.2), false, "capped");
        let err = theorem22_experiment(
            &params,
            &CostSpec::zero(),
            &nonconvex,
            1e-6,
            10,
            1,
            &[1],
            &grid,
        );
        assert!(err.is_err());
    }

    #[test]
    fn frictionless_binomial_reduction() {
        let params = ModelParams::new(1.0, 1, 0.1, std::f64::consts::LN_2, 1);
        let report = theorem22_experiment(
            &params,
            &CostSpec::zero(),
            &PayoffSpec::call(1.0).unwrap(),
            1e-6,
            200,
            17,
            &[1, 2],
            &GridConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(report.v_bar, 1.0 / 3.0, epsilon = 1e-6);
        for row in &report.rows {
            assert!(
                row.gap <= 1e-6 + row.grid_error + report.v_bar_grid_error,
                "k = {} gap {} vs errors {} + {}",
                row.refinement,
                row.gap,
                row.grid_error,
                report.v_bar_grid_error
            );
        }
        assert!(report.min_slack >= -1e-9, "min slack {}", report.min_slack);
    }
}
