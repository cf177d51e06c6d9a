//! Dual side of the pricing problem: candidate measures on the tree, the
//! penalized expectation they certify, and search utilities for exhibiting
//! near-zero duality gaps.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::costs::CostSpec;
use crate::error::{EngineError, Result};
use crate::extreal::ExtReal;
use crate::lattice::LatticeModel;
use crate::payoff::PayoffSpec;
use crate::primal::{build_ledger, LpCertificate, Strategy};

const PROB_TOL: f64 = 1e-12;

/// Nodewise transition probabilities; `transition[n][node_id]` is a
/// distribution over the branch set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMeasure {
    pub transition: Vec<Vec<Vec<f64>>>,
}

/// The dual objective: finite, or the explicit marker for measures that
/// put mass on nodes with infinite conjugate penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualValue {
    Finite(f64),
    NegInf,
}

impl DualValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            DualValue::Finite(v) => Some(v),
            DualValue::NegInf => None,
        }
    }

    /// Finite value, or negative infinity for ordering purposes.
    pub fn order_key(self) -> f64 {
        match self {
            DualValue::Finite(v) => v,
            DualValue::NegInf => f64::NEG_INFINITY,
        }
    }
}

impl DualMeasure {
    pub fn uniform(tree: &LatticeModel) -> DualMeasure {
        let b = tree.num_branches();
        let transition = (0..tree.periods())
            .map(|n| vec![vec![1.0 / b as f64; b]; tree.levels[n].len()])
            .collect();
        DualMeasure { transition }
    }

    /// The stepwise martingale measure supported on the extreme branches.
    pub fn risk_neutral_extremes(tree: &LatticeModel) -> DualMeasure {
        let b = tree.num_branches();
        let vals = tree.branches.values();
        let lo = vals[0].exp();
        let hi = vals[b - 1].exp();
        // q e^{x_max} + (1-q) e^{x_min} = 1
        let q = if (hi - lo).abs() < 1e-15 { 0.5 } else { (1.0 - lo) / (hi - lo) };
        let mut probs = vec![0.0; b];
        probs[0] = 1.0 - q;
        probs[b - 1] = q;
        let transition =
            (0..tree.periods()).map(|n| vec![probs.clone(); tree.levels[n].len()]).collect();
        DualMeasure { transition }
    }

    pub fn validate(&self, tree: &LatticeModel) -> Result<()> {
        if self.transition.len() != tree.periods() {
            return Err(EngineError::Shape("measure level count does not match the tree".into()));
        }
        let b = tree.num_branches();
        for (n, level) in self.transition.iter().enumerate() {
            if level.len() != tree.levels[n].len() {
                return Err(EngineError::Shape(format!("measure node count mismatch at level {n}")));
            }
            for (id, probs) in level.iter().enumerate() {
                if probs.len() != b {
                    return Err(EngineError::Shape(format!(
                        "probability vector at ({n}, {id}) has wrong arity"
                    )));
                }
                if probs.iter().any(|&p| p < -PROB_TOL) {
                    return Err(EngineError::Validation(format!(
                        "negative transition probability at ({n}, {id})"
                    )));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    return Err(EngineError::Validation(format!(
                        "transition probabilities at ({n}, {id}) sum to {sum}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Probability of reaching each node, level by level.
    pub fn node_probabilities(&self, tree: &LatticeModel) -> Vec<Vec<f64>> {
        let mut probs: Vec<Vec<f64>> = Vec::with_capacity(tree.periods() + 1);
        probs.push(vec![1.0]);
        for n in 0..tree.periods() {
            let mut next = vec![0.0; tree.levels[n + 1].len()];
            for (id, p) in probs[n].iter().enumerate() {
                if *p == 0.0 {
                    continue;
                }
                for (j, child_id) in tree.children_ids(id).enumerate() {
                    next[child_id] = p * self.transition[n][id][j];
                }
            }
            probs.push(next);
        }
        probs
    }

    /// Structured text form (node -> probability vector) for reproducibility.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::new();
        for (n, level) in self.transition.iter().enumerate() {
            for (id, probs) in level.iter().enumerate() {
                let row: Vec<String> = probs.iter().map(|p| format!("{p:.17e}")).collect();
                out.push_str(&format!("{n}/{id}: [{}]\n", row.join(", ")));
            }
        }
        out
    }
}

/// Conditional expectations of the terminal price and the induced drift
/// ratios, by exact backward recursion.
#[derive(Debug, Clone)]
pub struct MartingaleProjection {
    pub m: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
}

pub fn martingale_projection(tree: &LatticeModel, p: &DualMeasure) -> Result<MartingaleProjection> {
    p.validate(tree)?;
    let n_periods = tree.periods();
    let mut m: Vec<Vec<f64>> = vec![Vec::new(); n_periods + 1];
    m[n_periods] = tree.leaves().iter().map(|nd| nd.stock).collect();
    for n in (0..n_periods).rev() {
        let mut level = vec![0.0; tree.levels[n].len()];
        for (id, slot) in level.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, child_id) in tree.children_ids(id).enumerate() {
                acc += p.transition[n][id][j] * m[n + 1][child_id];
            }
            *slot = acc;
        }
        m[n] = level;
    }
    let alpha = (0..=n_periods)
        .map(|n| {
            tree.levels[n]
                .iter()
                .enumerate()
                .map(|(id, nd)| (m[n][id] - nd.stock) / nd.stock)
                .collect()
        })
        .collect();
    Ok(MartingaleProjection { m, alpha })
}

/// `E_P[F] - sum_n E_P[G_n(alpha_n)]` by exact tree recursion; the marker
/// value when the measure reaches a node with infinite penalty.
pub fn evaluate_dual(
    p: &DualMeasure,
    tree: &LatticeModel,
    cost: &CostSpec,
    payoff: &PayoffSpec,
) -> Result<DualValue> {
    let proj = martingale_projection(tree, p)?;
    let node_probs = p.node_probabilities(tree);
    let mut penalty = 0.0;
    for n in 0..tree.periods() {
        for (id, &pr) in node_probs[n].iter().enumerate() {
            if pr <= 0.0 {
                continue;
            }
            let hist = tree.price_prefix(n, id);
            // slack absorbs solver round-off on the boundary of the
            // conjugate's finiteness region
            match cost.conjugate_slack(n, &hist, proj.alpha[n][id], 1e-9)? {
                ExtReal::Finite(g) => penalty += pr * g,
                ExtReal::PosInf => return Ok(DualValue::NegInf),
            }
        }
    }
    let mut expected_payoff = 0.0;
    for (l, &pr) in node_probs[tree.periods()].iter().enumerate() {
        if pr <= 0.0 {
            continue;
        }
        expected_payoff += pr * payoff.evaluate(&tree.leaf_scenario(l).prices)?;
    }
    Ok(DualValue::Finite(expected_payoff - penalty))
}

/// Lemma-style weak duality: the capital of any super-replicating strategy
/// dominates the penalized expectation of any measure.
pub fn weak_duality_check(
    p: &DualMeasure,
    strategy: &Strategy,
    tree: &LatticeModel,
    cost: &CostSpec,
    payoff: &PayoffSpec,
) -> Result<f64> {
    let ledger = build_ledger(tree, strategy, cost)?;
    for (l, y) in ledger.values[tree.periods()].iter().enumerate() {
        let f = payoff.evaluate(&tree.leaf_scenario(l).prices)?;
        if y - f < -1e-8 {
            return Err(EngineError::Validation(format!(
                "strategy does not super-replicate (leaf {l} slack {})",
                y - f
            )));
        }
    }
    Ok(match evaluate_dual(p, tree, cost, payoff)? {
        DualValue::Finite(u) => strategy.initial_capital - u,
        DualValue::NegInf => f64::INFINITY,
    })
}

/// Turns the LP leaf multipliers into nodewise transitions. A vanishing
/// total mass falls back to the uniform measure with the flag set.
pub fn extract_dual_from_lp(
    certificate: &LpCertificate,
    tree: &LatticeModel,
) -> (DualMeasure, bool) {
    if certificate.degenerate || certificate.leaf_weights.len() != tree.leaves().len() {
        return (DualMeasure::uniform(tree), true);
    }
    let total: f64 = certificate.leaf_weights.iter().sum();
    if total < 1e-12 {
        return (DualMeasure::uniform(tree), true);
    }
    let b = tree.num_branches();
    let n_periods = tree.periods();
    // solver round-off leaves stray weights of order machine epsilon on
    // leaves that are exactly zero at the optimum; keeping them would put
    // vanishing-but-positive mass on nodes with unbounded drift
    let cutoff = 1e-12 * total;
    let cleaned: Vec<f64> = certificate
        .leaf_weights
        .iter()
        .map(|&w| if w < cutoff { 0.0 } else { w })
        .collect();
    let total: f64 = cleaned.iter().sum();
    // subtree mass per node, bottom-up
    let mut mass: Vec<Vec<f64>> = vec![Vec::new(); n_periods + 1];
    mass[n_periods] = cleaned.iter().map(|w| w / total).collect();
    for n in (0..n_periods).rev() {
        mass[n] = (0..tree.levels[n].len())
            .map(|id| tree.children_ids(id).map(|c| mass[n + 1][c]).sum())
            .collect();
    }
    let transition = (0..n_periods)
        .map(|n| {
            (0..tree.levels[n].len())
                .map(|id| {
                    let node_mass = mass[n][id];
                    if node_mass <= 1e-300 {
                        vec![1.0 / b as f64; b]
                    } else {
                        let mut probs: Vec<f64> =
                            tree.children_ids(id).map(|c| mass[n + 1][c] / node_mass).collect();
                        let s: f64 = probs.iter().sum();
                        for q in probs.iter_mut() {
                            *q /= s;
                        }
                        probs
                    }
                })
                .collect()
        })
        .collect();
    (DualMeasure { transition }, false)
}

#[derive(Debug, Clone)]
pub struct DualSearchResult {
    pub best_value: DualValue,
    pub best_measure: DualMeasure,
    pub evaluations: usize,
    pub budget_exhausted: bool,
}

fn project_simplex(v: &mut [f64]) {
    // Euclidean projection onto the probability simplex
    let n = v.len();
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let _ = n;
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    let s: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= s;
    }
}

/// Multi-start projected coordinate ascent over nodewise transitions.
/// Deterministic given the seed; no convergence claim, only a certified
/// lower bound on the dual value.
pub fn dual_search(
    tree: &LatticeModel,
    cost: &CostSpec,
    payoff: &PayoffSpec,
    budget: usize,
    seed: u64,
) -> Result<DualSearchResult> {
    if budget == 0 {
        return Err(EngineError::Parameter("dual search budget must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = tree.num_branches();
    let mut evals = 0usize;
    let mut best_value = DualValue::NegInf;
    let mut best_measure = DualMeasure::uniform(tree);
    let mut exhausted = false;

    let starts = 4usize;
    'outer: for restart in 0..starts {
        let mut current = match restart {
            0 => DualMeasure::risk_neutral_extremes(tree),
            1 => DualMeasure::uniform(tree),
            _ => {
                let transition = (0..tree.periods())
                    .map(|n| {
                        (0..tree.levels[n].len())
                            .map(|_| {
                                let mut probs: Vec<f64> =
                                    (0..b).map(|_| rng.gen_range(0.01..1.0)).collect();
                                let s: f64 = probs.iter().sum();
                                for p in probs.iter_mut() {
                                    *p /= s;
                                }
                                probs
                            })
                            .collect()
                    })
                    .collect();
                DualMeasure { transition }
            }
        };
        let mut current_value = evaluate_dual(&current, tree, cost, payoff)?;
        evals += 1;
        if current_value.order_key() > best_value.order_key() {
            best_value = current_value;
            best_measure = current.clone();
        }
        let mut step = 0.25;
        while step > 1e-6 {
            let mut improved = false;
            for n in 0..tree.periods() {
                for id in 0..tree.levels[n].len() {
                    for j in 0..b {
                        for dir in [1.0, -1.0] {
                            if evals >= budget {
                                exhausted = true;
                                break 'outer;
                            }
                            let mut cand = current.clone();
                            cand.transition[n][id][j] += dir * step;
                            project_simplex(&mut cand.transition[n][id]);
                            let v = evaluate_dual(&cand, tree, cost, payoff)?;
                            evals += 1;
                            if v.order_key() > current_value.order_key() + 1e-14 {
                                current = cand;
                                current_value = v;
                                improved = true;
                            }
                        }
                    }
                }
            }
            if current_value.order_key() > best_value.order_key() {
                best_value = current_value;
                best_measure = current.clone();
            }
            if !improved {
                step *= 0.5;
            }
        }
    }
    Ok(DualSearchResult { best_value, best_measure, evaluations: evals, budget_exhausted: exhausted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_tree, ModelParams};
    use crate::primal::solve_primal_lp;
    use approx::assert_abs_diff_eq;

    fn binomial_ln2() -> LatticeModel {
        build_tree(&ModelParams::new(1.0, 1, std::f64::consts::LN_2, std::f64::consts::LN_2, 1))
            .unwrap()
    }

    fn two_point(_tree: &LatticeModel, p_up: f64) -> DualMeasure {
        // branch 0 is the down move, branch 1 the up move
        DualMeasure { transition: vec![vec![vec![1.0 - p_up, p_up]]; 1] }
    }

    #[test]
    fn risk_neutral_binomial_evaluates_to_price() {
        let tree = binomial_ln2();
        let p = two_point(&tree, 1.0 / 3.0);
        let v = evaluate_dual(&p, &tree, &CostSpec::zero(), &PayoffSpec::call(1.0).unwrap())
            .unwrap();
        assert_abs_diff_eq!(v.finite().unwrap(), 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_penalty_arithmetic() {
        // p = 1/2: E[F] = 1/2, alpha = 0.25, penalty = 0.25^2/4
        let tree = binomial_ln2();
        let p = two_point(&tree, 0.5);
        let v = evaluate_dual(
            &p,
            &tree,
            &CostSpec::quadratic(1.0).unwrap(),
            &PayoffSpec::call(1.0).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(v.finite().unwrap(), 0.484375, epsilon = 1e-12);
    }

    #[test]
    fn proportional_cost_rejects_drifting_measure() {
        let tree = binomial_ln2();
        let p = two_point(&tree, 0.5);
        let v = evaluate_dual(
            &p,
            &tree,
            &CostSpec::proportional(0.1).unwrap(),
            &PayoffSpec::call(1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(v, DualValue::NegInf);
    }

    #[test]
    fn lp_certificate_recovers_known_measures() {
        let tree = binomial_ln2();
        let payoff = PayoffSpec::call(1.0).unwrap();
        let frictionless = solve_primal_lp(&tree, &CostSpec::zero(), &payoff).unwrap();
        let (m, degenerate) = extract_dual_from_lp(&frictionless.certificate, &tree);
        assert!(!degenerate);
        assert_abs_diff_eq!(m.transition[0][0][1], 1.0 / 3.0, epsilon = 1e-9);
        let u = evaluate_dual(&m, &tree, &CostSpec::zero(), &payoff).unwrap();
        assert_abs_diff_eq!(u.finite().unwrap(), frictionless.value, epsilon = 1e-7);

        let cost = CostSpec::proportional(0.1).unwrap();
        let frict = solve_primal_lp(&tree, &cost, &payoff).unwrap();
        let (m, degenerate) = extract_dual_from_lp(&frict.certificate, &tree);
        assert!(!degenerate);
        assert_abs_diff_eq!(m.transition[0][0][1], 0.4, epsilon = 1e-9);
        let u = evaluate_dual(&m, &tree, &cost, &payoff).unwrap();
        assert_abs_diff_eq!(u.finite().unwrap(), 0.4, epsilon = 1e-7);
    }

    #[test]
    fn weak_duality_against_lp_strategy() {
        let tree = build_tree(&ModelParams::new(1.0, 2, 0.1, 0.2, 1)).unwrap();
        let cost = CostSpec::proportional(0.05).unwrap();
        let payoff = PayoffSpec::call(1.0).unwrap();
        let sol = solve_primal_lp(&tree, &cost, &payoff).unwrap();
        // optimal pair: slack near zero
        let (m, _) = extract_dual_from_lp(&sol.certificate, &tree);
        let slack = weak_duality_check(&m, &sol.strategy, &tree, &cost, &payoff).unwrap();
        assert!(slack.abs() <= 1e-7, "optimal slack {slack}");
        // arbitrary measures: slack nonnegative
        for (i, p_up) in [0.1, 0.33, 0.7, 0.95].iter().enumerate() {
            let b = tree.num_branches();
            let mut probs = vec![(1.0 - p_up) / (b - 1) as f64; b];
            probs[b - 1] = *p_up;
            let m = DualMeasure {
                transition: (0..2).map(|n| vec![probs.clone(); tree.levels[n].len()]).collect(),
            };
            let slack = weak_duality_check(&m, &sol.strategy, &tree, &cost, &payoff).unwrap();
            assert!(slack >= -1e-8, "measure {i} slack {slack}");
        }
    }

    #[test]
    fn martingale_projection_matches_leaf_sums() {
        let tree = build_tree(&ModelParams::new(1.0, 3, 0.1, 0.2, 1)).unwrap();
        let m = DualMeasure::uniform(&tree);
        let proj = martingale_projection(&tree, &m).unwrap();
        let node_probs = m.node_probabilities(&tree);
        // recompute M at level 1 nodes from conditional leaf sums
        let b = tree.num_branches();
        for (id, _) in tree.levels[1].iter().enumerate() {
            let mut acc = 0.0;
            let mut mass = 0.0;
            for (l, leaf) in tree.leaves().iter().enumerate() {
                // ancestor at level 1 is the leading digit pair
                let anc = l / b.pow(2);
                if anc == id {
                    acc += node_probs[3][l] * leaf.stock;
                    mass += node_probs[3][l];
                }
            }
            assert_abs_diff_eq!(proj.m[1][id], acc / mass, epsilon = 1e-10);
        }
    }

    #[test]
    fn search_finds_binomial_optimum() {
        let tree = binomial_ln2();
        let payoff = PayoffSpec::call(1.0).unwrap();
        let res = dual_search(&tree, &CostSpec::zero(), &payoff, 1000, 7).unwrap();
        assert!(res.best_value.order_key() >= 1.0 / 3.0 - 1e-4, "got {:?}", res.best_value);
        // quadratic cost: compare against a dense scan over p
        let cost = CostSpec::quadratic(1.0).unwrap();
        let res = dual_search(&tree, &cost, &payoff, 2000, 7).unwrap();
        let mut scan_best = f64::NEG_INFINITY;
        let mut p_grid = 0.0;
        while p_grid <= 1.0 {
            let v = evaluate_dual(&two_point(&tree, p_grid), &tree, &cost, &payoff).unwrap();
            scan_best = scan_best.max(v.order_key());
            p_grid += 1e-4;
        }
        assert_abs_diff_eq!(res.best_value.order_key(), scan_best, epsilon = 1e-4);
    }

    #[test]
    fn constant_payoff_is_measure_independent_at_optimum() {
        let tree = build_tree(&ModelParams::new(1.0, 2, 0.1, 0.2, 1)).unwrap();
        let payoff = PayoffSpec::custom(|_| 2.0, true, "const 2");
        let res =
            dual_search(&tree, &CostSpec::quadratic(1.0).unwrap(), &payoff, 500, 3).unwrap();
        assert_abs_diff_eq!(res.best_value.order_key(), 2.0, epsilon = 1e-8);
    }

    #[test]
    fn jensen_direction_of_the_penalty() {
        // replacing alpha by its level average cannot increase the penalty
        let tree = build_tree(&ModelParams::new(1.0, 3, 0.1, 0.2, 1)).unwrap();
        let cost = CostSpec::quadratic(0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b = tree.num_branches();
            let transition: Vec<Vec<Vec<f64>>> = (0..3)
                .map(|n| {
                    (0..tree.levels[n].len())
                        .map(|_| {
                            let mut probs: Vec<f64> =
                                (0..b).map(|_| rng.gen_range(0.05..1.0)).collect();
                            let s: f64 = probs.iter().sum();
                            probs.iter_mut().for_each(|p| *p /= s);
                            probs
                        })
                        .collect()
                })
                .collect();
            let m = DualMeasure { transition };
            let proj = martingale_projection(&tree, &m).unwrap();
            let node_probs = m.node_probabilities(&tree);
            for n in 0..3 {
                let mut nodewise = 0.0;
                let mut mean_alpha = 0.0;
                let mut mass = 0.0;
                for (id, &pr) in node_probs[n].iter().enumerate() {
                    let g = cost
                        .conjugate(n, &[], proj.alpha[n][id])
                        .unwrap()
                        .unwrap_finite();
                    nodewise += pr * g;
                    mean_alpha += pr * proj.alpha[n][id];
                    mass += pr;
                }
                let avg = cost.conjugate(n, &[], mean_alpha / mass).unwrap().unwrap_finite();
                assert!(mass * avg <= nodewise + 1e-12);
            }
        }
    }
}
