//! Experiment configuration: a versioned JSON schema in which unknown keys
//! are hard errors, so persisted experiment records stay trustworthy.

use serde::{Deserialize, Serialize};

use crate::costs::CostSpec;
use crate::error::{EngineError, Result};
use crate::lattice::ModelParams;
use crate::payoff::PayoffSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Price,
    Dual,
    Gap,
    LiftCheck,
    KusuokaCheck,
    ScalingStudy,
}

impl std::str::FromStr for Mode {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "price" => Ok(Mode::Price),
            "dual" => Ok(Mode::Dual),
            "gap" => Ok(Mode::Gap),
            "lift-check" => Ok(Mode::LiftCheck),
            "kusuoka-check" => Ok(Mode::KusuokaCheck),
            "scaling-study" => Ok(Mode::ScalingStudy),
            other => Err(EngineError::Config(format!("unknown mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Price => "price",
            Mode::Dual => "dual",
            Mode::Gap => "gap",
            Mode::LiftCheck => "lift-check",
            Mode::KusuokaCheck => "kusuoka-check",
            Mode::ScalingStudy => "scaling-study",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Dp,
    Lp,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub s0: f64,
    pub periods: usize,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub refinement: usize,
}

impl ModelConfig {
    pub fn to_params(&self) -> Result<ModelParams> {
        let params =
            ModelParams::new(self.s0, self.periods, self.sigma_low, self.sigma_high, self.refinement);
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostConfig {
    Zero,
    Proportional { rate: f64 },
    Quadratic { lambda: f64 },
    TruncatedQuadratic { lambda: f64, cap: f64 },
    PiecewiseLinear { breakpoints: Vec<f64>, slopes: Vec<f64> },
}

impl CostConfig {
    pub fn to_spec(&self) -> Result<CostSpec> {
        match self {
            CostConfig::Zero => Ok(CostSpec::zero()),
            CostConfig::Proportional { rate } => CostSpec::proportional(*rate),
            CostConfig::Quadratic { lambda } => CostSpec::quadratic(*lambda),
            CostConfig::TruncatedQuadratic { lambda, cap } => {
                CostSpec::truncated_quadratic(*lambda, *cap)
            }
            CostConfig::PiecewiseLinear { breakpoints, slopes } => {
                CostSpec::piecewise_linear(breakpoints, slopes)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PayoffConfig {
    Call { strike: f64 },
    Put { strike: f64 },
    LookbackMax { strike: f64 },
    AsianAverage { strike: f64 },
}

impl PayoffConfig {
    pub fn to_spec(&self) -> Result<PayoffSpec> {
        match self {
            PayoffConfig::Call { strike } => PayoffSpec::call(*strike),
            PayoffConfig::Put { strike } => PayoffSpec::put(*strike),
            PayoffConfig::LookbackMax { strike } => PayoffSpec::lookback_max(*strike),
            PayoffConfig::AsianAverage { strike } => PayoffSpec::asian_average(*strike),
        }
    }
}

fn default_lift_epsilon() -> f64 {
    1e-4
}
fn default_lift_scenarios() -> usize {
    10_000
}
fn default_lift_refinements() -> Vec<usize> {
    vec![1, 2, 4]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftConfig {
    #[serde(default = "default_lift_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_lift_scenarios")]
    pub scenarios: usize,
    #[serde(default = "default_lift_refinements")]
    pub refinements: Vec<usize>,
}

impl Default for LiftConfig {
    fn default() -> Self {
        LiftConfig {
            epsilon: default_lift_epsilon(),
            scenarios: default_lift_scenarios(),
            refinements: default_lift_refinements(),
        }
    }
}

fn default_kusuoka_periods() -> usize {
    16
}
fn default_slope_cap() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KusuokaConfig {
    /// Constant volatility candidate; richer candidates are library-only.
    pub sigma: f64,
    #[serde(default = "default_kusuoka_periods")]
    pub periods: usize,
    #[serde(default = "default_slope_cap")]
    pub slope_cap: f64,
    /// 0 = full-tree enumeration; otherwise this many sampled paths.
    #[serde(default)]
    pub sample_paths: usize,
}

fn default_mc_paths() -> usize {
    2000
}
fn default_mc_steps() -> usize {
    256
}
fn default_band_grid() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    pub periods_list: Vec<usize>,
    #[serde(default = "default_slope_cap")]
    pub slope_cap: f64,
    #[serde(default = "default_mc_paths")]
    pub mc_paths: usize,
    #[serde(default = "default_mc_steps")]
    pub mc_steps: usize,
    #[serde(default = "default_band_grid")]
    pub band_grid: usize,
    /// Constant-volatility candidate family for the limit estimate.
    pub candidate_sigmas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    pub cost: CostConfig,
    pub payoff: PayoffConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default)]
    pub backend: BackendChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift: Option<LiftConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kusuoka: Option<KusuokaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingConfig>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| EngineError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(EngineError::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        // every referenced parameter set validates through its owning module
        self.model.to_params()?;
        self.cost.to_spec()?;
        self.payoff.to_spec()?;
        if let Some(points) = self.grid_points {
            if points < 3 {
                return Err(EngineError::Config("grid_points must be >= 3".into()));
            }
        }
        if self.budget == Some(0) {
            return Err(EngineError::Config("budget must be >= 1".into()));
        }
        Ok(())
    }
}
