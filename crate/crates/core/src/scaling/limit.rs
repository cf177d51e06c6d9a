//! Monte Carlo estimates of the limiting control value
//!
//!   sup_sigma  E[ F(S^sigma) - int_0^1 Hhat_t(S^sigma) a(sigma_t)^2 dt ]
//!
//! over a user-declared family of volatility candidates. The family never
//! exhausts the admissible controls, so the result is a lower estimate and
//! the report says so.

use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::Normal;

use crate::costs::{LimitCurvature, Penalty};
use crate::error::{EngineError, Result};
use crate::payoff::PayoffSpec;
use crate::scaling::VolCandidate;

#[derive(Debug, Clone)]
pub struct LimitEstimateRow {
    pub label: String,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub struct LimitEstimate {
    pub best_value: f64,
    pub best_std_error: f64,
    pub best_index: usize,
    pub rows: Vec<LimitEstimateRow>,
    /// Always true: the supremum is taken over the declared family only.
    pub lower_estimate: bool,
}

/// Estimates the value of each candidate by simulating S under the Wiener
/// measure with the candidate volatility (log-Euler scheme, which is exact
/// whenever the candidate is constant) and returns the family maximum.
#[allow(clippy::too_many_arguments)]
pub fn limit_value_estimate(
    candidates: &[VolCandidate],
    payoff: &PayoffSpec,
    curvature: &LimitCurvature,
    penalty: &Penalty,
    slope_cap: f64,
    s0: f64,
    mc_paths: usize,
    steps: usize,
    seed: u64,
) -> Result<LimitEstimate> {
    if candidates.is_empty() {
        return Err(EngineError::Parameter("empty candidate family".into()));
    }
    if !(s0 > 0.0) {
        return Err(EngineError::Parameter(format!("s0 must be > 0, got {s0}")));
    }
    if mc_paths < 2 || steps == 0 {
        return Err(EngineError::Parameter("need mc_paths >= 2 and steps >= 1".into()));
    }
    if slope_cap <= 0.0 {
        return Err(EngineError::Parameter("slope cap must be > 0".into()));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let dt = 1.0 / steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut rows = Vec::with_capacity(candidates.len());
    for (ci, cand) in candidates.iter().enumerate() {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for path_id in 0..mc_paths {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((ci as u64) << 32) | path_id as u64);
            let mut b = vec![0.0f64];
            let mut prices = vec![s0];
            let mut penalty_acc = 0.0;
            for n in 0..steps {
                let t = n as f64 * dt;
                let sigma = cand.evaluate(t, &b);
                if !(sigma.is_finite() && sigma >= 0.0) {
                    return Err(EngineError::Domain(format!(
                        "candidate '{}' produced sigma = {sigma} at t = {t}",
                        cand.label
                    )));
                }
                let pen = penalty.a(sigma)?;
                if pen > slope_cap + 1e-12 {
                    return Err(EngineError::Validation(format!(
                        "candidate '{}' rejected: a({sigma}) = {pen} exceeds the cap {slope_cap}",
                        cand.label
                    )));
                }
                penalty_acc += curvature.evaluate(t, &prices) * pen * pen * dt;
                let z: f64 = normal.sample(&mut rng);
                let s = prices[n] * (sigma * sqrt_dt * z - 0.5 * sigma * sigma * dt).exp();
                prices.push(s);
                b.push(b[n] + sqrt_dt * z);
            }
            let v = payoff.evaluate(&prices)? - penalty_acc;
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / mc_paths as f64;
        let var = (sum_sq / mc_paths as f64 - mean * mean).max(0.0) * mc_paths as f64
            / (mc_paths as f64 - 1.0);
        rows.push(LimitEstimateRow {
            label: cand.label.clone(),
            value: mean,
            std_error: (var / mc_paths as f64).sqrt(),
        });
    }
    let best_index = rows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .map(|(i, _)| i)
        .expect("nonempty");
    Ok(LimitEstimate {
        best_value: rows[best_index].value,
        best_std_error: rows[best_index].std_error,
        best_index,
        rows,
        lower_estimate: true,
    })
}
