//! Convergence study of the rescaled tree prices V_N.
//!
//! For a convex terminal payoff the tree value is attained on the extreme
//! branches, so V_N is computed on the recombining +-sigma_high/sqrt(N)
//! binomial lattice; costs must be path-independent for the reduction. The
//! study reports V_N next to two Monte Carlo references: the best constant
//! volatility in the band (a lower bound with zero penalty) and the best
//! candidate of a declared family for the limiting value.

use crate::costs::{truncate, CostSpec, LimitCurvature, Penalty};
use crate::error::{EngineError, Result};
use crate::payoff::PayoffSpec;
use crate::primal::dp::{Grid, GOLDEN};
use crate::scaling::{limit_value_estimate, VolCandidate};

/// Exact risk-neutral price on the N-period binomial lattice with log-step
/// `+-sigma_step` and zero rate.
pub fn frictionless_binomial_price(
    s0: f64,
    sigma_step: f64,
    periods: usize,
    payoff: &PayoffSpec,
) -> Result<f64> {
    if !(s0 > 0.0 && sigma_step > 0.0 && periods >= 1) {
        return Err(EngineError::Parameter(
            "need s0 > 0, sigma_step > 0, periods >= 1".into(),
        ));
    }
    if !payoff.terminal_only() {
        return Err(EngineError::Validation(
            "closed binomial sum needs a terminal payoff".into(),
        ));
    }
    let q = (1.0 - (-sigma_step).exp()) / (sigma_step.exp() - (-sigma_step).exp());
    let mut total = 0.0;
    // binomial weights by the multiplicative recurrence to stay stable
    let mut weight = (1.0 - q).powi(periods as i32);
    for j in 0..=periods {
        let s = s0 * (sigma_step * (2.0 * j as f64 - periods as f64)).exp();
        total += weight * payoff.evaluate(&[s0, s])?;
        if j < periods {
            weight *= (periods - j) as f64 / (j + 1) as f64 * q / (1.0 - q);
        }
    }
    Ok(total)
}

/// Value functions per up-count on a shared holding grid.
struct BinomialDp<'a> {
    s0: f64,
    sigma_step: f64,
    periods: usize,
    cost: &'a CostSpec,
    grid: Grid,
    gs_tol: f64,
    /// `levels[n][j]` for level n, j ups; terminal level holds constants.
    levels: Vec<Vec<Vec<f64>>>,
    terminal: Vec<f64>,
}

impl BinomialDp<'_> {
    fn stock(&self, n: usize, j: usize) -> f64 {
        self.s0 * (self.sigma_step * (2.0 * j as f64 - n as f64)).exp()
    }

    fn child_value(&self, n: usize, j: usize, gamma: f64) -> f64 {
        if n == self.periods {
            self.terminal[j]
        } else {
            self.grid.interp(&self.levels[n][j], gamma)
        }
    }

    fn objective(&self, n: usize, j: usize, gamma_prev: f64, gamma: f64) -> f64 {
        let s = self.stock(n, j);
        let charge = self.cost.evaluate(n, &[], (gamma - gamma_prev) * s);
        let up = self.stock(n + 1, j + 1);
        let down = self.stock(n + 1, j);
        let cont_up = -gamma * (up - s) + self.child_value(n + 1, j + 1, gamma);
        let cont_down = -gamma * (down - s) + self.child_value(n + 1, j, gamma);
        charge + cont_up.max(cont_down)
    }

    fn minimize(&self, n: usize, j: usize, gamma_prev: f64) -> (f64, f64) {
        let (mut a, mut b) = (self.grid.lo, self.grid.hi);
        let mut x1 = b - GOLDEN * (b - a);
        let mut x2 = a + GOLDEN * (b - a);
        let mut f1 = self.objective(n, j, gamma_prev, x1);
        let mut f2 = self.objective(n, j, gamma_prev, x2);
        while b - a > self.gs_tol {
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - GOLDEN * (b - a);
                f1 = self.objective(n, j, gamma_prev, x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + GOLDEN * (b - a);
                f2 = self.objective(n, j, gamma_prev, x2);
            }
        }
        if f1 <= f2 {
            (x1, f1)
        } else {
            (x2, f2)
        }
    }

    fn backward(&mut self) {
        self.levels = vec![Vec::new(); self.periods];
        for n in (0..self.periods).rev() {
            let mut level = Vec::with_capacity(n + 1);
            for j in 0..=n {
                let vals: Vec<f64> = (0..self.grid.points)
                    .map(|i| self.minimize(n, j, self.grid.at(i)).1)
                    .collect();
                level.push(vals);
            }
            self.levels[n] = level;
        }
    }

    /// Forward pass. The inherited holding at `(n, j)` depends on the path,
    /// but the argmin is monotone in it, so the realized range per state is
    /// bracketed by propagating the interval of inherited holdings through
    /// the argmins at its endpoints.
    fn forward_ranges(&self) -> (f64, (f64, f64)) {
        let mut ranges: Vec<(f64, f64)> = vec![(0.0, 0.0)];
        let mut value = 0.0;
        let mut hmin = f64::INFINITY;
        let mut hmax = f64::NEG_INFINITY;
        for n in 0..self.periods {
            let mut next = vec![(f64::INFINITY, f64::NEG_INFINITY); n + 2];
            for (j, &(plo, phi)) in ranges.iter().enumerate() {
                let (g_lo, v_lo) = self.minimize(n, j, plo);
                let (g_hi, _) = self.minimize(n, j, phi);
                if n == 0 {
                    value = v_lo;
                }
                let (lo, hi) = (g_lo.min(g_hi), g_lo.max(g_hi));
                hmin = hmin.min(lo);
                hmax = hmax.max(hi);
                for child in [j, j + 1] {
                    next[child].0 = next[child].0.min(lo);
                    next[child].1 = next[child].1.max(hi);
                }
            }
            ranges = next;
        }
        (value, (hmin, hmax))
    }
}

/// Upper-bound value of the recombining binomial model by the holding-grid
/// dynamic program, with the grid extent adapted to the realized holdings.
pub(crate) fn binomial_dp_value(
    s0: f64,
    sigma_step: f64,
    periods: usize,
    cost: &CostSpec,
    payoff: &PayoffSpec,
    points: usize,
) -> Result<f64> {
    if points < 3 {
        return Err(EngineError::Parameter("grid needs at least 3 points".into()));
    }
    if cost.is_path_dependent() {
        return Err(EngineError::Validation(
            "binomial reduction needs a path-independent cost".into(),
        ));
    }
    if !(payoff.terminal_only() && payoff.convex_in_path()) {
        return Err(EngineError::Validation(
            "binomial reduction needs a convex terminal payoff".into(),
        ));
    }
    let terminal: Result<Vec<f64>> = (0..=periods)
        .map(|j| {
            let s = s0 * (sigma_step * (2.0 * j as f64 - periods as f64)).exp();
            payoff.evaluate(&[s0, s])
        })
        .collect();
    let terminal = terminal?;
    // initial extent from the terminal slopes, then widen on contact
    let s_top = s0 * (sigma_step * periods as f64).exp();
    let s_bot = s0 * (-sigma_step * periods as f64).exp();
    let ds = s0 * (sigma_step.exp() - 1.0);
    let slope_hi = (payoff.evaluate(&[s0, s_top])? - payoff.evaluate(&[s0, s_top - ds])?) / ds;
    let slope_lo = (payoff.evaluate(&[s0, s_bot + ds])? - payoff.evaluate(&[s0, s_bot])?) / ds;
    let mut lo = slope_lo.min(0.0) - 1.0;
    let mut hi = slope_hi.max(0.0) + 1.0;
    let solve = |lo: f64, hi: f64| -> (f64, (f64, f64), f64) {
        let grid = Grid::new(lo, hi, points);
        let step = grid.step;
        let mut dp = BinomialDp {
            s0,
            sigma_step,
            periods,
            cost,
            grid,
            gs_tol: 1e-12 * (hi - lo),
            levels: Vec::new(),
            terminal: terminal.clone(),
        };
        dp.backward();
        let (value, range) = dp.forward_ranges();
        (value, range, step)
    };
    for _ in 0..8 {
        let (value, (hmin, hmax), step) = solve(lo, hi);
        let margin = 2.0 * step;
        if hmin > lo + margin && hmax < hi - margin {
            return Ok(value);
        }
        let width = hi - lo;
        if hmin <= lo + margin {
            lo -= width;
        }
        if hmax >= hi - margin {
            hi += width;
        }
    }
    Err(EngineError::Capacity("holding-grid widening did not stabilize".into()))
}

#[derive(Debug, Clone)]
pub struct StudyRow {
    pub periods: usize,
    pub value: f64,
    /// Best constant-volatility Monte Carlo price in the band.
    pub lower_bound: f64,
    pub lower_bound_se: f64,
    pub lower_bound_label: String,
}

#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub rows: Vec<StudyRow>,
    /// Best declared-family estimate of the limiting value.
    pub limit_estimate: f64,
    pub limit_std_error: f64,
    pub limit_label: String,
    /// The family never exhausts the admissible controls.
    pub limit_is_lower_estimate: bool,
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub s0: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    /// Slope cap `c` of the cost truncation and the control constraint.
    pub slope_cap: f64,
    pub mc_paths: usize,
    pub mc_steps: usize,
    pub seed: u64,
    pub grid_points: usize,
    /// Size of the constant-volatility grid behind the lower bound.
    pub band_grid: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            s0: 1.0,
            sigma_low: 0.1,
            sigma_high: 0.2,
            slope_cap: 2.0,
            mc_paths: 2000,
            mc_steps: 256,
            seed: 0,
            grid_points: 513,
            band_grid: 5,
        }
    }
}

/// Prices the payoff on the rescaled binomial models for each N in the
/// ascending list and checks every value against the constant-volatility
/// lower bound (a breach beyond 3 standard errors is a contract failure).
pub fn convergence_study(
    cost: &CostSpec,
    payoff: &PayoffSpec,
    periods_list: &[usize],
    candidates: &[VolCandidate],
    curvature: &LimitCurvature,
    config: &StudyConfig,
) -> Result<ConvergenceStudy> {
    if periods_list.is_empty() || periods_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EngineError::Parameter("periods list must be strictly ascending".into()));
    }
    if config.band_grid < 2 {
        return Err(EngineError::Parameter("band grid needs at least 2 points".into()));
    }
    let penalty = Penalty::new(config.sigma_low, config.sigma_high)?;
    // band lower bound: best constant volatility, penalty-free inside the band
    let band: Vec<VolCandidate> = (0..config.band_grid)
        .map(|i| {
            let t = i as f64 / (config.band_grid - 1) as f64;
            VolCandidate::constant(config.sigma_low + t * (config.sigma_high - config.sigma_low))
        })
        .collect();
    let lower = limit_value_estimate(
        &band,
        payoff,
        &LimitCurvature::constant(0.0),
        &penalty,
        config.slope_cap,
        config.s0,
        config.mc_paths,
        config.mc_steps,
        config.seed,
    )?;
    let family = limit_value_estimate(
        candidates,
        payoff,
        curvature,
        &penalty,
        config.slope_cap,
        config.s0,
        config.mc_paths,
        config.mc_steps,
        config.seed.wrapping_add(1),
    )?;
    let mut rows = Vec::with_capacity(periods_list.len());
    for &n in periods_list {
        let g_n = if cost.is_zero() {
            CostSpec::zero()
        } else {
            truncate(cost, config.slope_cap / (n as f64).sqrt())?
        };
        let sigma_step = config.sigma_high / (n as f64).sqrt();
        let value = if cost.is_zero() {
            frictionless_binomial_price(config.s0, sigma_step, n, payoff)?
        } else {
            binomial_dp_value(config.s0, sigma_step, n, &g_n, payoff, config.grid_points)?
        };
        if value < lower.best_value - 3.0 * lower.best_std_error {
            return Err(EngineError::Contract(format!(
                "V_{n} = {value} breaches the band lower bound {} (se {})",
                lower.best_value, lower.best_std_error
            )));
        }
        rows.push(StudyRow {
            periods: n,
            value,
            lower_bound: lower.best_value,
            lower_bound_se: lower.best_std_error,
            lower_bound_label: lower.rows[lower.best_index].label.clone(),
        });
    }
    Ok(ConvergenceStudy {
        rows,
        limit_estimate: family.best_value,
        limit_std_error: family.best_std_error,
        limit_label: family.rows[family.best_index].label.clone(),
        limit_is_lower_estimate: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_tree, ModelParams};
    use crate::primal::{solve_primal_dp, GridConfig};
    use crate::scaling::black_scholes_call;
    use approx::assert_abs_diff_eq;

    #[test]
    fn binomial_sum_matches_direct_enumeration() {
        let payoff = PayoffSpec::call(1.0).unwrap();
        let sigma = 0.2;
        let exact = frictionless_binomial_price(1.0, sigma, 3, &payoff).unwrap();
        let q = (1.0 - (-sigma as f64).exp()) / (sigma.exp() - (-sigma).exp());
        let mut brute = 0.0;
        for word in 0..8u32 {
            let ups = word.count_ones() as f64;
            let s = (sigma * (2.0 * ups - 3.0)).exp();
            brute += q.powf(ups) * (1.0 - q).powf(3.0 - ups) * (s - 1.0f64).max(0.0);
        }
        assert_abs_diff_eq!(exact, brute, epsilon = 1e-14);
    }

    #[test]
    fn binomial_prices_converge_to_black_scholes() {
        let payoff = PayoffSpec::call(1.0).unwrap();
        let bs = black_scholes_call(1.0, 1.0, 0.2);
        let mut gaps = Vec::new();
        for n in [4usize, 16, 64] {
            let v =
                frictionless_binomial_price(1.0, 0.2 / (n as f64).sqrt(), n, &payoff).unwrap();
            gaps.push((v - bs).abs());
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps not decreasing: {gaps:?}");
    }

    #[test]
    fn dp_agrees_with_exact_sum_when_frictionless() {
        let payoff = PayoffSpec::call(1.0).unwrap();
        let exact = frictionless_binomial_price(1.0, 0.1, 8, &payoff).unwrap();
        let dp = binomial_dp_value(1.0, 0.1, 8, &CostSpec::zero(), &payoff, 513).unwrap();
        assert_abs_diff_eq!(dp, exact, epsilon = 1e-4);
        assert!(dp >= exact - 1e-9, "grid value must stay an upper bound");
    }

    #[test]
    fn dp_agrees_with_tree_solver_under_costs() {
        // sigma_low = sigma_high collapses the tree to the same binomial model
        let sigma = 0.15;
        let tree = build_tree(&ModelParams::new(1.0, 3, sigma, sigma, 1)).unwrap();
        let cost = CostSpec::quadratic(0.5).unwrap();
        let payoff = PayoffSpec::call(1.0).unwrap();
        let full = solve_primal_dp(&tree, &cost, &payoff, &GridConfig::default()).unwrap();
        let reduced = binomial_dp_value(1.0, sigma, 3, &cost, &payoff, 513).unwrap();
        assert_abs_diff_eq!(reduced, full.value, epsilon = 2.0 * full.report.grid_error_bound + 1e-6);
    }

    #[test]
    fn dp_rejects_lookback_and_path_costs() {
        let payoff = PayoffSpec::lookback_max(1.0).unwrap();
        assert!(binomial_dp_value(1.0, 0.1, 4, &CostSpec::zero(), &payoff, 65).is_err());
    }

    #[test]
    fn study_runs_and_respects_the_lower_bound() {
        let cost = CostSpec::quadratic(1.0).unwrap();
        let payoff = PayoffSpec::call(1.0).unwrap();
        let config = StudyConfig {
            mc_paths: 1000,
            mc_steps: 1,
            grid_points: 257,
            ..StudyConfig::default()
        };
        let cands = [VolCandidate::constant(0.2)];
        let study = convergence_study(
            &cost,
            &payoff,
            &[2, 4],
            &cands,
            &LimitCurvature::quadratic(1.0),
            &config,
        )
        .unwrap();
        assert_eq!(study.rows.len(), 2);
        for row in &study.rows {
            assert!(row.value >= row.lower_bound - 3.0 * row.lower_bound_se);
        }
        assert!(study.limit_is_lower_estimate);
        // descending period lists are refused
        assert!(convergence_study(
            &cost,
            &payoff,
            &[4, 2],
            &cands,
            &LimitCurvature::quadratic(1.0),
            &config,
        )
        .is_err());
    }
}
