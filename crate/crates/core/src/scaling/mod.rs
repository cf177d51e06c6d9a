//! Scaling-limit experiments: near-martingale measures on sign trees from
//! a volatility candidate, Monte Carlo estimates of the limiting control
//! value, and convergence studies of the rescaled tree prices.

mod kusuoka;
mod limit;
mod study;

pub use kusuoka::{
    kusuoka_measure, kusuoka_sample_paths, KusuokaNode, KusuokaPath, KusuokaTree, VolCandidate,
    MAX_FULL_TREE_PERIODS,
};
pub use limit::{limit_value_estimate, LimitEstimate, LimitEstimateRow};
pub use study::{
    convergence_study, frictionless_binomial_price, ConvergenceStudy, StudyConfig, StudyRow,
};

use statrs::distribution::{ContinuousCDF, Normal};

/// Black-Scholes call price with unit maturity and zero rate.
pub fn black_scholes_call(s0: f64, strike: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return (s0 - strike).max(0.0);
    }
    if strike <= 0.0 {
        return s0 - strike;
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let d1 = ((s0 / strike).ln() + 0.5 * sigma * sigma) / sigma;
    let d2 = d1 - sigma;
    s0 * normal.cdf(d1) - strike * normal.cdf(d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn black_scholes_reference_values() {
        // at-the-money, sigma 0.2: 2*N(0.1) - 1 in units of s0
        let normal = Normal::new(0.0, 1.0).unwrap();
        let expect = 2.0 * normal.cdf(0.1) - 1.0;
        assert_abs_diff_eq!(black_scholes_call(1.0, 1.0, 0.2), expect, epsilon = 1e-12);
        // deep in the money approaches intrinsic value
        assert_abs_diff_eq!(black_scholes_call(1.0, 0.01, 0.2), 0.99, epsilon = 1e-6);
        // vanishing volatility gives intrinsic value
        assert_abs_diff_eq!(black_scholes_call(1.0, 0.8, 0.0), 0.2, epsilon = 1e-15);
    }
}
