//! Mode dispatch: one experiment per invocation, deterministic given the
//! config and seed, writing a JSON result record plus mode-specific CSV.

use serde_json::{json, Value};

use crate::cli::config::{
    BackendChoice, ExperimentConfig, KusuokaConfig, LiftConfig, Mode, ScalingConfig, SCHEMA_VERSION,
};
use crate::costs::{CostSpec, LimitCurvature};
use crate::dual::{dual_search, evaluate_dual, extract_dual_from_lp, DualValue};
use crate::error::{EngineError, Result};
use crate::lattice::build_tree;
use crate::lifting::theorem22_experiment;
use crate::payoff::PayoffSpec;
use crate::primal::{solve_primal_dp, solve_primal_lp, GridConfig};
use crate::scaling::{
    convergence_study, kusuoka_measure, kusuoka_sample_paths, StudyConfig, VolCandidate,
    MAX_FULL_TREE_PERIODS,
};

const DEFAULT_DUAL_BUDGET: usize = 20_000;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Mode-specific numeric results, deterministic given config + seed.
    pub result: Value,
    /// CSV table for modes that emit one.
    pub csv: Option<String>,
}

/// Process exit status for an engine error: 2 for configuration and
/// validation problems, 3 for capacity refusals, 4 for numerical-contract
/// breaches (which signal bugs, not user error).
pub fn exit_code(err: &EngineError) -> i32 {
    match err {
        EngineError::Capacity(_) => 3,
        EngineError::Contract(_) | EngineError::Internal(_) => 4,
        _ => 2,
    }
}

fn grid_config(config: &ExperimentConfig) -> GridConfig {
    GridConfig { points: config.grid_points.unwrap_or(513), ..GridConfig::default() }
}

fn run_price(config: &ExperimentConfig, cost: &CostSpec, payoff: &PayoffSpec) -> Result<Value> {
    let tree = build_tree(&config.model.to_params()?)?;
    match config.backend {
        BackendChoice::Dp => {
            let sol = solve_primal_dp(&tree, cost, payoff, &grid_config(config))?;
            Ok(json!({
                "value": sol.value,
                "backend": "dp",
                "grid_error_bound": sol.report.grid_error_bound,
            }))
        }
        BackendChoice::Lp => {
            let sol = solve_primal_lp(&tree, cost, payoff)?;
            Ok(json!({
                "value": sol.value,
                "backend": "lp",
                "solver_iterations": sol.report.solver_iterations,
            }))
        }
    }
}

fn run_dual(config: &ExperimentConfig, cost: &CostSpec, payoff: &PayoffSpec) -> Result<Value> {
    let tree = build_tree(&config.model.to_params()?)?;
    let budget = config.budget.unwrap_or(DEFAULT_DUAL_BUDGET);
    let search = dual_search(&tree, cost, payoff, budget, config.seed)?;
    Ok(json!({
        "value": search.best_value.finite(),
        "evaluations": search.evaluations,
        "budget_exhausted": search.budget_exhausted,
    }))
}

fn run_gap(config: &ExperimentConfig, cost: &CostSpec, payoff: &PayoffSpec) -> Result<Value> {
    let tree = build_tree(&config.model.to_params()?)?;
    let (value, dual_value, method) = if cost.max_affine_pieces().is_some() {
        let sol = solve_primal_lp(&tree, cost, payoff)?;
        let (measure, fallback) = extract_dual_from_lp(&sol.certificate, &tree);
        if fallback {
            // degenerate certificate: fall back to the direct search
            let budget = config.budget.unwrap_or(DEFAULT_DUAL_BUDGET);
            let search = dual_search(&tree, cost, payoff, budget, config.seed)?;
            (sol.value, search.best_value, "lp+search")
        } else {
            (sol.value, evaluate_dual(&measure, &tree, cost, payoff)?, "lp")
        }
    } else {
        let sol = solve_primal_dp(&tree, cost, payoff, &grid_config(config))?;
        let budget = config.budget.unwrap_or(DEFAULT_DUAL_BUDGET);
        let search = dual_search(&tree, cost, payoff, budget, config.seed)?;
        (sol.value, search.best_value, "dp+search")
    };
    let u = match dual_value {
        DualValue::Finite(u) => u,
        DualValue::NegInf => f64::NEG_INFINITY,
    };
    if u > value + 1e-8 {
        return Err(EngineError::Contract(format!(
            "weak duality breach: U = {u} exceeds V = {value}"
        )));
    }
    Ok(json!({
        "value": value,
        "dual_value": if u.is_finite() { Value::from(u) } else { Value::Null },
        "gap": if u.is_finite() { Value::from(value - u) } else { Value::Null },
        "method": method,
    }))
}

fn run_lift_check(config: &ExperimentConfig, cost: &CostSpec, payoff: &PayoffSpec) -> Result<Value> {
    let lift = config.lift.clone().unwrap_or_else(LiftConfig::default);
    let report = theorem22_experiment(
        &config.model.to_params()?,
        cost,
        payoff,
        lift.epsilon,
        lift.scenarios,
        config.seed,
        &lift.refinements,
        &grid_config(config),
    )?;
    if report.min_slack < -1e-9 {
        return Err(EngineError::Contract(format!(
            "lifted strategy fails to super-replicate: min slack {}",
            report.min_slack
        )));
    }
    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "refinement": r.refinement,
                "value": r.v_k,
                "gap": r.gap,
                "grid_error": r.grid_error,
            })
        })
        .collect();
    Ok(json!({
        "binomial_value": report.v_bar,
        "binomial_grid_error": report.v_bar_grid_error,
        "rows": rows,
        "min_slack": report.min_slack,
        "scenarios": report.scenarios,
    }))
}

fn run_kusuoka_check(config: &ExperimentConfig) -> Result<Value> {
    let kc: &KusuokaConfig = config
        .kusuoka
        .as_ref()
        .ok_or_else(|| EngineError::Config("kusuoka-check mode needs a 'kusuoka' section".into()))?;
    let model = &config.model;
    let candidate = VolCandidate::constant(kc.sigma);
    if kc.sample_paths == 0 {
        if kc.periods > MAX_FULL_TREE_PERIODS {
            return Err(EngineError::Capacity(format!(
                "full-tree check caps at {MAX_FULL_TREE_PERIODS} periods; set sample_paths"
            )));
        }
        let (_, tree) = kusuoka_measure(
            &candidate,
            model.s0,
            model.sigma_low,
            model.sigma_high,
            kc.slope_cap,
            kc.periods,
        )?;
        tree.check_invariants(None)?;
        Ok(json!({
            "mode": "full-tree",
            "periods": kc.periods,
            "nodes": (1usize << (kc.periods + 1)) - 1,
            "invariants": "ok",
        }))
    } else {
        let paths = kusuoka_sample_paths(
            &candidate,
            model.s0,
            model.sigma_low,
            model.sigma_high,
            kc.slope_cap,
            kc.periods,
            kc.sample_paths,
            config.seed,
        )?;
        Ok(json!({
            "mode": "sampled",
            "periods": kc.periods,
            "paths": paths.len(),
            "invariants": "ok",
        }))
    }
}

fn run_scaling_study(
    config: &ExperimentConfig,
    cost: &CostSpec,
    payoff: &PayoffSpec,
) -> Result<(Value, String)> {
    let sc: &ScalingConfig = config.scaling.as_ref().ok_or_else(|| {
        EngineError::Config("scaling-study mode needs a 'scaling' section".into())
    })?;
    if sc.candidate_sigmas.is_empty() {
        return Err(EngineError::Config("candidate_sigmas must be nonempty".into()));
    }
    // the limiting curvature is known in closed form only for these kinds
    let curvature = match config.cost {
        crate::cli::config::CostConfig::Zero => LimitCurvature::constant(0.0),
        crate::cli::config::CostConfig::Quadratic { lambda } => LimitCurvature::quadratic(lambda),
        _ => {
            return Err(EngineError::Config(
                "scaling-study supports zero or quadratic costs".into(),
            ))
        }
    };
    let candidates: Vec<VolCandidate> =
        sc.candidate_sigmas.iter().map(|&s| VolCandidate::constant(s)).collect();
    let study_config = StudyConfig {
        s0: config.model.s0,
        sigma_low: config.model.sigma_low,
        sigma_high: config.model.sigma_high,
        slope_cap: sc.slope_cap,
        mc_paths: sc.mc_paths,
        mc_steps: sc.mc_steps,
        seed: config.seed,
        grid_points: config.grid_points.unwrap_or(513),
        band_grid: sc.band_grid,
    };
    let study =
        convergence_study(cost, payoff, &sc.periods_list, &candidates, &curvature, &study_config)?;
    let mut csv =
        String::from("N,V_N,lower_bound,lower_bound_se,best_limit_estimate,best_candidate_id\n");
    for row in &study.rows {
        csv.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            row.periods,
            row.value,
            row.lower_bound,
            row.lower_bound_se,
            study.limit_estimate,
            study.limit_label,
        ));
    }
    let rows: Vec<Value> = study
        .rows
        .iter()
        .map(|r| {
            json!({
                "periods": r.periods,
                "value": r.value,
                "lower_bound": r.lower_bound,
                "lower_bound_se": r.lower_bound_se,
            })
        })
        .collect();
    let record = json!({
        "rows": rows,
        "limit_estimate": study.limit_estimate,
        "limit_std_error": study.limit_std_error,
        "limit_label": study.limit_label,
        "limit_is_lower_estimate": study.limit_is_lower_estimate,
    });
    Ok((record, csv))
}

/// Dispatches to the owning module. Pure except for the computation itself;
/// persistence is the binary's concern.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let cost = config.cost.to_spec()?;
    let payoff = config.payoff.to_spec()?;
    let (result, csv) = match config.mode {
        Mode::Price => (run_price(config, &cost, &payoff)?, None),
        Mode::Dual => (run_dual(config, &cost, &payoff)?, None),
        Mode::Gap => (run_gap(config, &cost, &payoff)?, None),
        Mode::LiftCheck => (run_lift_check(config, &cost, &payoff)?, None),
        Mode::KusuokaCheck => (run_kusuoka_check(config)?, None),
        Mode::ScalingStudy => {
            let (record, csv) = run_scaling_study(config, &cost, &payoff)?;
            (record, Some(csv))
        }
    };
    Ok(RunOutcome { result, csv })
}

/// Full result record written by the binary; `wall_ms` is the only field
/// allowed to differ between reruns of the same config and seed.
pub fn result_record(config: &ExperimentConfig, outcome: &RunOutcome, wall_ms: u128) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "library_version": env!("CARGO_PKG_VERSION"),
        "mode": config.mode.to_string(),
        "seed": config.seed,
        "wall_ms": wall_ms,
        "config": serde_json::to_value(config).expect("config serializes"),
        "result": outcome.result,
    })
}
