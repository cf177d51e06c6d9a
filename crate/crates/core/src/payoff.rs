//! Payoff functionals on full price paths.

use std::fmt;
use std::sync::Arc;

use crate::error::{EngineError, Result};

#[derive(Clone)]
pub enum PayoffKind {
    /// `(S_N - strike)^+`
    Call { strike: f64 },
    /// `(strike - S_N)^+`
    Put { strike: f64 },
    /// `max_n S_n - strike` (floored at zero)
    LookbackMax { strike: f64 },
    /// `(mean_n S_n - strike)^+` over all N+1 prices
    AsianAverage { strike: f64 },
    Custom { eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>, convex: bool, label: String },
}

#[derive(Clone)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
}

impl fmt::Debug for PayoffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PayoffKind::Call { strike } => write!(f, "Call(K={strike})"),
            PayoffKind::Put { strike } => write!(f, "Put(K={strike})"),
            PayoffKind::LookbackMax { strike } => write!(f, "LookbackMax(K={strike})"),
            PayoffKind::AsianAverage { strike } => write!(f, "AsianAverage(K={strike})"),
            PayoffKind::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

impl PayoffSpec {
    pub fn call(strike: f64) -> Result<PayoffSpec> {
        Self::vanilla(strike).map(|_| PayoffSpec { kind: PayoffKind::Call { strike } })
    }

    pub fn put(strike: f64) -> Result<PayoffSpec> {
        Self::vanilla(strike).map(|_| PayoffSpec { kind: PayoffKind::Put { strike } })
    }

    pub fn lookback_max(strike: f64) -> Result<PayoffSpec> {
        Self::vanilla(strike).map(|_| PayoffSpec { kind: PayoffKind::LookbackMax { strike } })
    }

    pub fn asian_average(strike: f64) -> Result<PayoffSpec> {
        Self::vanilla(strike).map(|_| PayoffSpec { kind: PayoffKind::AsianAverage { strike } })
    }

    fn vanilla(strike: f64) -> Result<()> {
        if !strike.is_finite() || strike < 0.0 {
            return Err(EngineError::Parameter(format!("strike must be finite and >= 0, got {strike}")));
        }
        Ok(())
    }

    pub fn custom<F>(f: F, convex: bool, label: &str) -> PayoffSpec
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        PayoffSpec { kind: PayoffKind::Custom { eval: Arc::new(f), convex, label: label.into() } }
    }

    /// Whether the payoff is convex as a function of the full price path.
    pub fn convex_in_path(&self) -> bool {
        match &self.kind {
            PayoffKind::Custom { convex, .. } => *convex,
            _ => true,
        }
    }

    /// Whether the payoff reads only the terminal price.
    pub fn terminal_only(&self) -> bool {
        matches!(self.kind, PayoffKind::Call { .. } | PayoffKind::Put { .. })
    }

    /// Evaluate on a full price path `S_0..=S_N`.
    pub fn evaluate(&self, prices: &[f64]) -> Result<f64> {
        if prices.is_empty() {
            return Err(EngineError::Shape("payoff needs a nonempty price path".into()));
        }
        let last = *prices.last().unwrap();
        let v = match &self.kind {
            PayoffKind::Call { strike } => (last - strike).max(0.0),
            PayoffKind::Put { strike } => (strike - last).max(0.0),
            PayoffKind::LookbackMax { strike } => {
                let m = prices.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (m - strike).max(0.0)
            }
            PayoffKind::AsianAverage { strike } => {
                let mean = prices.iter().sum::<f64>() / prices.len() as f64;
                (mean - strike).max(0.0)
            }
            PayoffKind::Custom { eval, .. } => eval(prices),
        };
        if !v.is_finite() || v < 0.0 {
            return Err(EngineError::Validation(format!("payoff produced invalid value {v}")));
        }
        Ok(v)
    }

    /// Uniform bound over paths whose prices stay in `(0, s_max]`.
    pub fn upper_bound(&self, s_max: f64, periods: usize) -> Result<f64> {
        match &self.kind {
            PayoffKind::Call { .. } | PayoffKind::LookbackMax { .. } => Ok(s_max),
            PayoffKind::Put { strike } => Ok(*strike),
            PayoffKind::AsianAverage { .. } => Ok(s_max),
            PayoffKind::Custom { eval, .. } => {
                // crude scan over constant paths; callers needing a sharp
                // bound should pass a structured payoff instead
                let mut bound = 0.0f64;
                for i in 1..=32 {
                    let s = s_max * i as f64 / 32.0;
                    bound = bound.max(eval(&vec![s; periods + 1]));
                }
                Ok(bound * 2.0 + 1.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn vanilla_payoffs() {
        let c = PayoffSpec::call(1.0).unwrap();
        assert_abs_diff_eq!(c.evaluate(&[1.0, 0.5, 1.5]).unwrap(), 0.5);
        assert_abs_diff_eq!(c.evaluate(&[1.0, 2.0, 0.8]).unwrap(), 0.0);
        let p = PayoffSpec::put(1.0).unwrap();
        assert_abs_diff_eq!(p.evaluate(&[1.0, 2.0, 0.8]).unwrap(), 0.2);
        assert!(c.terminal_only() && p.terminal_only());
    }

    #[test]
    fn path_dependent_payoffs() {
        let lb = PayoffSpec::lookback_max(1.0).unwrap();
        assert_abs_diff_eq!(lb.evaluate(&[1.0, 1.8, 0.9]).unwrap(), 0.8);
        let asian = PayoffSpec::asian_average(1.0).unwrap();
        assert_abs_diff_eq!(asian.evaluate(&[1.0, 1.3, 1.3]).unwrap(), 0.2);
        assert!(!lb.terminal_only() && !asian.terminal_only());
        assert!(lb.convex_in_path() && asian.convex_in_path());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(PayoffSpec::call(-1.0).is_err());
        let c = PayoffSpec::call(1.0).unwrap();
        assert!(c.evaluate(&[]).is_err());
        let bad = PayoffSpec::custom(|_| f64::NAN, false, "nan");
        assert!(bad.evaluate(&[1.0]).is_err());
    }
}
