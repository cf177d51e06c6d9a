//! Randomized invariants across modules.

use proptest::prelude::*;

use robusthedge::costs::{truncate, CostSpec, Penalty};
use robusthedge::dual::{weak_duality_check, DualMeasure};
use robusthedge::extreal::ExtReal;
use robusthedge::lattice::{build_tree, project_scenario, ModelParams, ScenarioPath};
use robusthedge::payoff::PayoffSpec;
use robusthedge::primal::{solve_primal_dp, GridConfig};

fn small_params() -> impl Strategy<Value = ModelParams> {
    (1usize..=2, 1usize..=2, 0.05f64..0.15, 0.02f64..0.15).prop_map(
        |(periods, refinement, sigma_low, gap)| {
            ModelParams::new(1.0, periods, sigma_low, sigma_low + gap, refinement)
        },
    )
}

fn small_cost() -> impl Strategy<Value = CostSpec> {
    prop_oneof![
        Just(CostSpec::zero()),
        (0.01f64..0.5).prop_map(|r| CostSpec::proportional(r).unwrap()),
        (0.1f64..2.0).prop_map(|l| CostSpec::quadratic(l).unwrap()),
        (0.1f64..2.0, 0.1f64..1.0)
            .prop_map(|(l, c)| CostSpec::truncated_quadratic(l, c).unwrap()),
    ]
}

fn small_payoff() -> impl Strategy<Value = PayoffSpec> {
    prop_oneof![
        (0.8f64..1.2).prop_map(|k| PayoffSpec::call(k).unwrap()),
        (0.8f64..1.2).prop_map(|k| PayoffSpec::put(k).unwrap()),
        (0.8f64..1.2).prop_map(|k| PayoffSpec::lookback_max(k).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn random_measures_never_beat_the_primal(
        params in small_params(),
        cost in small_cost(),
        payoff in small_payoff(),
        raw in proptest::collection::vec(0.01f64..1.0, 64),
    ) {
        let tree = build_tree(&params).unwrap();
        let sol = solve_primal_dp(&tree, &cost, &payoff, &GridConfig::default()).unwrap();
        let b = tree.num_branches();
        let mut next = raw.iter().cycle();
        let transition: Vec<Vec<Vec<f64>>> = (0..tree.periods())
            .map(|n| {
                (0..tree.levels[n].len())
                    .map(|_| {
                        let row: Vec<f64> = (0..b).map(|_| *next.next().unwrap()).collect();
                        let total: f64 = row.iter().sum();
                        row.into_iter().map(|w| w / total).collect()
                    })
                    .collect()
            })
            .collect();
        let gap = weak_duality_check(
            &DualMeasure { transition }, &sol.strategy, &tree, &cost, &payoff,
        ).unwrap();
        prop_assert!(gap >= -1e-8, "weak duality gap {gap}");
    }

    #[test]
    fn finer_grids_never_raise_the_price(
        params in small_params(),
        cost in small_cost(),
        payoff in small_payoff(),
    ) {
        // a convex value function sampled on a refined grid interpolates lower
        let coarse = GridConfig { points: 129, extent: Some(30.0), ..GridConfig::default() };
        let fine = GridConfig { points: 513, extent: Some(30.0), ..GridConfig::default() };
        let tree = build_tree(&params).unwrap();
        let v_coarse = solve_primal_dp(&tree, &cost, &payoff, &coarse).unwrap().value;
        let v_fine = solve_primal_dp(&tree, &cost, &payoff, &fine).unwrap().value;
        prop_assert!(v_fine <= v_coarse + 1e-9, "{v_fine} > {v_coarse}");
    }

    #[test]
    fn price_is_monotone_in_payoff_and_cost(
        params in small_params(),
        rate in 0.01f64..0.3,
        bump in 0.0f64..0.5,
        strike in 0.8f64..1.2,
    ) {
        let tree = build_tree(&params).unwrap();
        let grid = GridConfig::default();
        let call = PayoffSpec::call(strike).unwrap();
        let shifted = PayoffSpec::custom(
            move |p: &[f64]| (p[p.len() - 1] - strike).max(0.0) + bump,
            true,
            "call+bump",
        );
        let cheap = CostSpec::proportional(rate).unwrap();
        let dear = CostSpec::proportional(rate + bump).unwrap();
        let v = solve_primal_dp(&tree, &cheap, &call, &grid).unwrap().value;
        let v_shifted = solve_primal_dp(&tree, &cheap, &shifted, &grid).unwrap().value;
        let v_dear = solve_primal_dp(&tree, &dear, &call, &grid).unwrap().value;
        let tol = 1e-7;
        prop_assert!(v <= v_shifted + tol, "payoff monotonicity: {v} > {v_shifted}");
        prop_assert!(v <= v_dear + tol, "cost monotonicity: {v} > {v_dear}");
    }

    #[test]
    fn price_is_subadditive_in_the_payoff(
        params in small_params(),
        rate in 0.01f64..0.3,
        k1 in 0.8f64..1.2,
        k2 in 0.8f64..1.2,
    ) {
        let tree = build_tree(&params).unwrap();
        let grid = GridConfig::default();
        let cost = CostSpec::proportional(rate).unwrap();
        let f1 = PayoffSpec::call(k1).unwrap();
        let f2 = PayoffSpec::put(k2).unwrap();
        let sum = PayoffSpec::custom(
            move |p: &[f64]| {
                let s = p[p.len() - 1];
                (s - k1).max(0.0) + (k2 - s).max(0.0)
            },
            true,
            "call+put",
        );
        let v1 = solve_primal_dp(&tree, &cost, &f1, &grid).unwrap().value;
        let v2 = solve_primal_dp(&tree, &cost, &f2, &grid).unwrap().value;
        let v12 = solve_primal_dp(&tree, &cost, &sum, &grid).unwrap().value;
        prop_assert!(v12 <= v1 + v2 + 1e-6, "{v12} > {v1} + {v2}");
    }

    #[test]
    fn projection_floors_each_return(
        params in small_params(),
        signs in proptest::collection::vec(any::<bool>(), 2),
        fracs in proptest::collection::vec(0.0f64..1.0, 2),
    ) {
        let tree = build_tree(&params).unwrap();
        let returns: Vec<f64> = (0..params.periods)
            .map(|n| {
                let mag = params.sigma_low + fracs[n] * (params.sigma_high - params.sigma_low);
                if signs[n] { mag } else { -mag }
            })
            .collect();
        let path = ScenarioPath::from_returns(params.s0, &returns);
        let projected = project_scenario(&path, &tree).unwrap();
        for (x, px) in path.returns.iter().zip(&projected.returns) {
            // grid value below, within one branch gap
            prop_assert!(px <= x);
            let gap = (params.sigma_high - params.sigma_low).max(1e-12);
            prop_assert!(x - px <= gap + 1e-12);
        }
    }

    #[test]
    fn fenchel_young_for_random_costs(
        cost in small_cost(),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        if let ExtReal::Finite(g_star) = cost.conjugate(0, &[], alpha).unwrap() {
            let g = cost.evaluate(0, &[], beta);
            prop_assert!(g + g_star >= alpha * beta - 1e-9);
        }
    }

    #[test]
    fn truncation_is_dominated_and_monotone(
        lambda in 0.2f64..2.0,
        c1 in 0.1f64..1.0,
        extra in 0.1f64..1.0,
        beta in -3.0f64..3.0,
    ) {
        let base = CostSpec::quadratic(lambda).unwrap();
        let lo = truncate(&base, c1).unwrap();
        let hi = truncate(&base, c1 + extra).unwrap();
        let (v_lo, v_hi) = (lo.evaluate(0, &[], beta), hi.evaluate(0, &[], beta));
        prop_assert!(v_lo <= v_hi + 1e-12);
        prop_assert!(v_hi <= base.evaluate(0, &[], beta) + 1e-12);
    }

    #[test]
    fn envelope_inequality_random_band(
        sigma_low in 0.05f64..0.2,
        gap in 0.01f64..0.3,
        frac in 0.0f64..1.0,
        flip in any::<bool>(),
        y in -4.0f64..4.0,
    ) {
        let sigma_high = sigma_low + gap;
        let penalty = Penalty::new(sigma_low, sigma_high).unwrap();
        let mag = sigma_low + frac * gap;
        let x = if flip { mag } else { -mag };
        prop_assert!(penalty.b(x * x + 2.0 * x * y) <= y * y + 1e-12);
    }
}
