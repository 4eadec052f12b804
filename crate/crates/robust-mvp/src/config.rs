//! Run configuration: one TOML file describes a simulate, estimate or
//! backtest run. All defaults are embedded so an effective config can be
//! dumped for any run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backtest::ParamPolicy;
use crate::factor::NumFactors;
use crate::sim::DgpSpec;
use crate::strategy::StrategySpec;
use crate::threshold::{ThresholdConstant, ThresholdRule};

/// Configuration errors.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// TOML syntax or schema problem (includes line/field diagnostics from
    /// the parser).
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    /// Semantically invalid configuration.
    #[error("invalid config: {0}")]
    Invalid(String),

    /// Could not read the file.
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
}

/// Which command a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    /// Replicated synthetic experiments.
    Simulate,
    /// One estimation pass over a CSV panel.
    Estimate,
    /// Rolling-window backtest over a CSV panel.
    Backtest,
}

/// Thread-count choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum Threads {
    /// Let the pool pick (the literal string `auto`).
    Auto(crate::factor::AutoTag),
    /// Exactly this many workers.
    Fixed(usize),
}

impl Threads {
    /// Convenience constructor for the automatic choice.
    pub const AUTO: Threads = Threads::Auto(crate::factor::AutoTag::Auto);

    /// Worker count to build a pool with (0 = library default).
    pub fn worker_count(self) -> usize {
        match self {
            Threads::Auto(_) => 0,
            Threads::Fixed(n) => n,
        }
    }
}

impl Default for Threads {
    fn default() -> Self {
        Threads::AUTO
    }
}

/// Estimation settings shared by the estimate and backtest commands and by
/// the factor-model strategies in simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    /// Number of factors (`"auto"` or an integer).
    pub num_factors: NumFactors,
    /// Residual-norm quantile for the robustness threshold.
    pub threshold_quantile: f64,
    /// Reweighting iteration cap.
    pub max_iterations: usize,
    /// Convergence tolerance.
    pub tolerance: f64,
    /// Search bound for the automatic factor count.
    pub max_factor_search: usize,
    /// Thresholding constant (`"cv"` or a number).
    pub threshold_constant: ThresholdConstant,
    /// Shrinkage rule.
    pub threshold_rule: ThresholdRule,
    /// Cross-validation folds.
    pub cv_folds: usize,
    /// Cross-validation candidate grid (ascending).
    pub cv_grid: Vec<f64>,
    /// Cross-validation seed.
    pub cv_seed: u64,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        let pca = crate::factor::RobustPcaConfig::default();
        let threshold = crate::threshold::ThresholdConfig::default();
        Self {
            num_factors: pca.num_factors,
            threshold_quantile: pca.threshold_quantile,
            max_iterations: pca.max_iterations,
            tolerance: pca.tolerance,
            max_factor_search: pca.max_factor_search,
            threshold_constant: threshold.constant,
            threshold_rule: threshold.rule,
            cv_folds: threshold.cv_folds,
            cv_grid: threshold.cv_grid,
            cv_seed: threshold.cv_seed,
        }
    }
}

impl EstimationConfig {
    /// The factor config this estimation block describes.
    pub fn pca_config(&self) -> crate::factor::RobustPcaConfig {
        crate::factor::RobustPcaConfig {
            num_factors: self.num_factors,
            threshold_quantile: self.threshold_quantile,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            max_factor_search: self.max_factor_search,
            sign_rule: crate::factor::SignRule::default(),
        }
    }

    /// The thresholding config this estimation block describes.
    pub fn threshold_config(&self) -> crate::threshold::ThresholdConfig {
        crate::threshold::ThresholdConfig {
            constant: self.threshold_constant,
            rule: self.threshold_rule,
            cv_folds: self.cv_folds,
            cv_grid: self.cv_grid.clone(),
            cv_seed: self.cv_seed,
            ..crate::threshold::ThresholdConfig::default()
        }
    }

    /// Build the named strategy with these estimation settings.
    pub fn strategy(&self, name: &str) -> Result<StrategySpec, ConfigError> {
        let mut spec = match name {
            "r_mvp" => StrategySpec::r_mvp(self.num_factors),
            "poet" | "poet_mvp" => StrategySpec::poet_mvp(self.num_factors),
            "sample" | "sample_mvp" => return Ok(StrategySpec::sample_mvp()),
            "equal_weight" | "1/n" => return Ok(StrategySpec::equal_weight()),
            "linear_shrinkage" | "linear" => return Ok(StrategySpec::linear_shrinkage()),
            "oracle" | "oracle_mvp" => return Ok(StrategySpec::oracle_mvp()),
            other => {
                return Err(ConfigError::Invalid(format!(
                    "strategies: unknown strategy {other:?} (expected r_mvp, poet, sample, \
                     equal_weight, linear_shrinkage or oracle)"
                )))
            }
        };
        spec.pca = self.pca_config();
        if spec.kind == crate::strategy::StrategyKind::PoetMvp {
            spec.pca.threshold_quantile = 1.0;
        }
        spec.threshold = self.threshold_config();
        Ok(spec)
    }
}

/// Simulation command settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// The design to generate.
    pub dgp: DgpSpec,
    /// Number of replications.
    pub n_reps: usize,
    /// Strategy names to compare.
    #[serde(default = "default_sim_strategies")]
    pub strategies: Vec<String>,
    /// Estimation settings for the factor-model strategies.
    #[serde(default)]
    pub estimation: EstimationConfig,
    /// Accept up to this many failed strategy-by-replication cells before
    /// the run exits nonzero.
    #[serde(default)]
    pub tolerate_failures: usize,
    /// Replication whose weight sequence is dumped for diagnostics.
    #[serde(default)]
    pub flag_omega_rep: u64,
    /// Run replications on the thread pool.
    #[serde(default = "default_true")]
    pub parallel: bool,
}

fn default_sim_strategies() -> Vec<String> {
    vec![
        "oracle".into(),
        "linear_shrinkage".into(),
        "poet".into(),
        "r_mvp".into(),
    ]
}

fn default_true() -> bool {
    true
}

/// Estimate command settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// CSV panel to estimate on.
    pub panel: PathBuf,
    /// Estimation settings.
    #[serde(default)]
    pub estimation: EstimationConfig,
}

/// Backtest command settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    /// CSV panel to run over.
    pub panel: PathBuf,
    /// Trailing window length.
    pub window: usize,
    /// Holding length between rebalances.
    pub holding: usize,
    /// Transaction cost in basis points per unit of turnover.
    #[serde(default = "default_cost_bps")]
    pub cost_bps: f64,
    /// Strategy names to run.
    #[serde(default = "default_backtest_strategies")]
    pub strategies: Vec<String>,
    /// Parameter refresh policy.
    #[serde(default)]
    pub param_policy: ParamPolicy,
    /// Disable within-holding-period weight drift.
    #[serde(default)]
    pub frozen_weights: bool,
    /// Inclusive start label filter.
    #[serde(default)]
    pub start: Option<String>,
    /// Inclusive end label filter.
    #[serde(default)]
    pub end: Option<String>,
    /// Estimation settings for the factor-model strategies.
    #[serde(default)]
    pub estimation: EstimationConfig,
}

fn default_cost_bps() -> f64 {
    10.0
}

fn default_backtest_strategies() -> Vec<String> {
    vec![
        "equal_weight".into(),
        "sample".into(),
        "linear_shrinkage".into(),
        "poet".into(),
        "r_mvp".into(),
    ]
}

impl BacktestConfig {
    /// Lower this config into a [`crate::backtest::BacktestSpec`].
    pub fn to_spec(&self) -> Result<crate::backtest::BacktestSpec, ConfigError> {
        let strategies = self
            .strategies
            .iter()
            .map(|name| self.estimation.strategy(name))
            .collect::<Result<Vec<_>, _>>()?;
        if strategies
            .iter()
            .any(|s| s.kind == crate::strategy::StrategyKind::OracleMvp)
        {
            return Err(ConfigError::Invalid(
                "strategies: the oracle strategy needs a known truth and cannot be backtested"
                    .into(),
            ));
        }
        Ok(crate::backtest::BacktestSpec {
            window: self.window,
            holding: self.holding,
            cost: self.cost_bps * 1e-4,
            strategies,
            param_policy: self.param_policy,
            frozen_weights: self.frozen_weights,
            start: self.start.clone(),
            end: self.end.clone(),
        })
    }
}

/// A full run: exactly one command block must be present and match
/// `command`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Which command to run.
    pub command: CommandKind,
    /// Output directory for artifacts.
    pub output_dir: PathBuf,
    /// Verbosity: `quiet` or `info`.
    #[serde(default = "default_log_level")]
    pub log_level: String,
    /// Thread-pool size.
    #[serde(default)]
    pub threads: Threads,
    /// Simulation block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    /// Estimate block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
    /// Backtest block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtest: Option<BacktestConfig>,
}

fn default_log_level() -> String {
    "info".into()
}

impl RunConfig {
    /// Parse and validate a TOML string.
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parse and validate a TOML file.
    pub fn from_toml_path<P: AsRef<Path>>(path: P) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Serialize the effective config back to TOML.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let present = |name: &str, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!(
                    "command = {name:?} requires a [{name}] block"
                )))
            }
        };
        match self.command {
            CommandKind::Simulate => present("simulate", self.simulate.is_some())?,
            CommandKind::Estimate => present("estimate", self.estimate.is_some())?,
            CommandKind::Backtest => present("backtest", self.backtest.is_some())?,
        }
        if !matches!(self.log_level.as_str(), "quiet" | "info") {
            return Err(ConfigError::Invalid(format!(
                "log_level: expected \"quiet\" or \"info\", got {:?}",
                self.log_level
            )));
        }
        Ok(())
    }
}
