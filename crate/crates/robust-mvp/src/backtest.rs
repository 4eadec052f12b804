//! Rolling-window out-of-sample evaluation with rebalancing, transaction
//! costs and turnover.
//!
//! At each decision node a strategy is fitted on the trailing `window`
//! periods and its weights are held for `holding` periods. Held weights
//! drift with realized returns (`w_i (1 + r_i)`, renormalized) unless the
//! frozen-weights toggle is set; the drifted vector is the pre-rebalance
//! position charged against the next target. The initial allocation at the
//! first node is cost-free.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{fit_robust_factors, NumFactors};
use crate::metrics::{max_drawdown, realized_sharpe, sample_sd};
use crate::panel::ReturnPanel;
use crate::strategy::{fit_strategy, StrategyError, StrategyKind, StrategySpec};
use crate::threshold::{cross_validate_constant, ThresholdConstant};

/// Errors from the backtester.
#[derive(Debug, Error)]
pub enum BacktestError {
    /// Panel shorter than one window plus one holding period.
    #[error("insufficient history: panel has {available} periods, need at least {required}")]
    InsufficientHistory {
        /// Periods required (`window + holding`).
        required: usize,
        /// Periods available.
        available: usize,
    },

    /// Misaligned series lengths.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Turnover needs at least two decision nodes.
    #[error("too few rebalances: need at least 2 decision nodes, got {0}")]
    TooFewRebalances(usize),

    /// Bad spec field.
    #[error("invalid backtest spec: {0}")]
    InvalidSpec(String),

    /// A strategy failed at a node; the run aborts with the node named.
    #[error("strategy {strategy} failed at node {node}: {source}")]
    Estimator {
        /// Decision node index.
        node: usize,
        /// Strategy label.
        strategy: String,
        /// Underlying failure.
        #[source]
        source: StrategyError,
    },

    /// Panel slicing failure.
    #[error("panel: {0}")]
    Panel(#[from] crate::panel::PanelError),

    /// Held weights drifted to a zero-value portfolios.
    #[error("portfolio value hit zero during holding period at period {0}")]
    DegeneratePath(usize),
}

/// Parameter policy across decision nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamPolicy {
    /// Resolve the factor count and thresholding constant once at the first
    /// node and keep them fixed.
    #[default]
    FixAtFirstNode,
    /// Re-resolve automatic parameters at every node.
    RefitEachNode,
}

/// Backtest specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSpec {
    /// Trailing estimation window length.
    pub window: usize,
    /// Holding length between rebalances.
    pub holding: usize,
    /// Proportional cost per unit of turnover (10 basis points = 0.001).
    pub cost: f64,
    /// Strategies to run.
    pub strategies: Vec<StrategySpec>,
    /// How automatic parameters are refreshed.
    #[serde(default)]
    pub param_policy: ParamPolicy,
    /// Hold target weights fixed within holding periods instead of letting
    /// them drift (sensitivity toggle).
    #[serde(default)]
    pub frozen_weights: bool,
    /// Restrict the panel to labels at or after this one.
    #[serde(default)]
    pub start: Option<String>,
    /// Restrict the panel to labels at or before this one.
    #[serde(default)]
    pub end: Option<String>,
}

impl BacktestSpec {
    fn validate(&self) -> Result<(), BacktestError> {
        if self.window < 2 {
            return Err(BacktestError::InvalidSpec(
                "window must be at least 2".into(),
            ));
        }
        if self.holding == 0 {
            return Err(BacktestError::InvalidSpec(
                "holding must be at least 1".into(),
            ));
        }
        if self.cost < 0.0 || !self.cost.is_finite() {
            return Err(BacktestError::InvalidSpec(format!(
                "cost {} must be finite and nonnegative",
                self.cost
            )));
        }
        if self.strategies.is_empty() {
            return Err(BacktestError::InvalidSpec("no strategies".into()));
        }
        Ok(())
    }
}

/// Weight trajectory of one strategy across the rebalance calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSeries {
    /// Target weights per decision node (node x assets, row-major).
    pub targets: Vec<Vec<f64>>,
    /// Post-drift weights at the end of each holding window (same shape);
    /// entry `k` is the pre-rebalance position charged against target
    /// `k + 1`.
    pub drifted: Vec<Vec<f64>>,
    /// Index into the per-period return series at which each target takes
    /// effect.
    pub rebalance_periods: Vec<usize>,
}

impl WeightSeries {
    fn num_nodes(&self) -> usize {
        self.targets.len()
    }
}

/// Net returns after proportional transaction costs.
///
/// At each rebalance period `t` (from the second node on) the gross return
/// is adjusted as `(1 - cost * |target - drifted|_1) * (1 + r_t) - 1`; all
/// other periods pass through unchanged. Zero cost reproduces the gross
/// series exactly.
pub fn net_returns(
    gross: &[f64],
    series: &WeightSeries,
    cost: f64,
) -> Result<Vec<f64>, BacktestError> {
    if series.targets.len() != series.rebalance_periods.len()
        || series.drifted.len() != series.targets.len()
    {
        return Err(BacktestError::LengthMismatch(format!(
            "{} targets, {} drifted, {} rebalance periods",
            series.targets.len(),
            series.drifted.len(),
            series.rebalance_periods.len()
        )));
    }
    let mut net = gross.to_vec();
    for node in 1..series.num_nodes() {
        let period = series.rebalance_periods[node];
        if period >= gross.len() {
            return Err(BacktestError::LengthMismatch(format!(
                "rebalance period {period} beyond series length {}",
                gross.len()
            )));
        }
        let l1: f64 = series.targets[node]
            .iter()
            .zip(&series.drifted[node - 1])
            .map(|(t, d)| (t - d).abs())
            .sum();
        let fee = cost * l1;
        // No trade, no cost: pass the gross return through untouched.
        if fee != 0.0 {
            net[period] = (1.0 - fee) * (1.0 + gross[period]) - 1.0;
        }
    }
    Ok(net)
}

/// Average l1 turnover across rebalances:
/// `(1/R) sum_k |target_{k+1} - drifted_k|_1`.
pub fn turnover(series: &WeightSeries) -> Result<f64, BacktestError> {
    let nodes = series.num_nodes();
    if nodes < 2 {
        return Err(BacktestError::TooFewRebalances(nodes));
    }
    let mut total = 0.0;
    for node in 1..nodes {
        total += series.targets[node]
            .iter()
            .zip(&series.drifted[node - 1])
            .map(|(t, d)| (t - d).abs())
            .sum::<f64>();
    }
    Ok(total / (nodes - 1) as f64)
}

/// Headline statistics of one return series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    /// Sum of per-period returns.
    pub cumulative_return: f64,
    /// Sample standard deviation of per-period returns.
    pub risk: f64,
    /// Realized Sharpe ratio.
    pub sharpe: f64,
    /// Maximum drawdown of the cumulative path.
    pub mdd: f64,
}

fn series_stats(returns: &[f64]) -> SeriesStats {
    SeriesStats {
        cumulative_return: returns.iter().sum(),
        risk: sample_sd(returns),
        sharpe: realized_sharpe(returns),
        mdd: max_drawdown(returns),
    }
}

/// One strategy's full backtest record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyBacktest {
    /// Strategy label.
    pub label: String,
    /// Per-period gross returns over the evaluation span.
    pub gross: Vec<f64>,
    /// Per-period net returns.
    pub net: Vec<f64>,
    /// The weight trajectory.
    pub series: WeightSeries,
    /// Gross-series statistics.
    pub gross_stats: SeriesStats,
    /// Net-series statistics.
    pub net_stats: SeriesStats,
    /// Average turnover (absent with a single node).
    pub turnover: Option<f64>,
}

/// Full backtest output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    /// Window length used.
    pub window: usize,
    /// Holding length used.
    pub holding: usize,
    /// Proportional cost used.
    pub cost: f64,
    /// Number of decision nodes.
    pub num_nodes: usize,
    /// Assets in the run (complete history is guaranteed at ingestion).
    pub roster: Vec<String>,
    /// Time labels of the evaluated periods.
    pub periods: Vec<String>,
    /// One record per strategy.
    pub strategies: Vec<StrategyBacktest>,
}

impl BacktestReport {
    /// Record for a strategy label.
    pub fn strategy(&self, label: &str) -> Option<&StrategyBacktest> {
        self.strategies.iter().find(|s| s.label == label)
    }
}

/// Resolve automatic parameters (factor count, thresholding constant) on a
/// training window, returning a concretized spec.
fn resolve_params(
    spec: &StrategySpec,
    window: &ReturnPanel,
) -> Result<StrategySpec, StrategyError> {
    let mut resolved = spec.clone();
    if !matches!(spec.kind, StrategyKind::RMvp | StrategyKind::PoetMvp) {
        return Ok(resolved);
    }
    if matches!(resolved.pca.num_factors, NumFactors::Auto(_)) {
        let fit = fit_robust_factors(window, &resolved.effective_pca())?;
        resolved.pca.num_factors = NumFactors::Fixed(fit.num_factors());
    }
    if matches!(
        resolved.threshold.constant,
        ThresholdConstant::CrossValidate(_)
    ) {
        let fit = fit_robust_factors(window, &resolved.effective_pca())?;
        let resid = crate::factor::residuals(window, &fit)?;
        let (constant, _) = cross_validate_constant(&resid, &resolved.threshold)?;
        resolved.threshold.constant = ThresholdConstant::Fixed(constant);
    }
    Ok(resolved)
}

/// Run the rolling-window backtest.
///
/// The calendar has `floor((L - window) / holding)` decision nodes; node `k`
/// trains on rows `[k * holding, k * holding + window)` and holds over the
/// next `holding` rows. Trailing rows that do not fill a holding window are
/// unused, so every evaluated return is used exactly once.
pub fn rolling_backtest(
    panel: &ReturnPanel,
    spec: &BacktestSpec,
) -> Result<BacktestReport, BacktestError> {
    spec.validate()?;
    let panel = restrict_panel(panel, spec)?;

    let total = panel.num_periods();
    if total < spec.window + spec.holding {
        return Err(BacktestError::InsufficientHistory {
            required: spec.window + spec.holding,
            available: total,
        });
    }
    let num_nodes = (total - spec.window) / spec.holding;
    let eval_len = num_nodes * spec.holding;
    let p = panel.num_assets();

    let periods: Vec<String> = panel.time_index()[spec.window..spec.window + eval_len].to_vec();

    let mut strategies = Vec::with_capacity(spec.strategies.len());
    for strat in &spec.strategies {
        // Parameter policy: concretize automatic choices at node 0, or leave
        // them automatic so every node re-resolves.
        let node0_window = panel.window(0, spec.window)?;
        let effective = match spec.param_policy {
            ParamPolicy::FixAtFirstNode => {
                resolve_params(strat, &node0_window).map_err(|source| BacktestError::Estimator {
                    node: 0,
                    strategy: strat.label.clone(),
                    source,
                })?
            }
            ParamPolicy::RefitEachNode => strat.clone(),
        };

        let mut gross = Vec::with_capacity(eval_len);
        let mut targets = Vec::with_capacity(num_nodes);
        let mut drifted = Vec::with_capacity(num_nodes);
        let mut rebalance_periods = Vec::with_capacity(num_nodes);

        for node in 0..num_nodes {
            let train_start = node * spec.holding;
            let train = panel.window(train_start, spec.window)?;
            let output = fit_strategy(&effective, &train, None).map_err(|source| {
                BacktestError::Estimator {
                    node,
                    strategy: strat.label.clone(),
                    source,
                }
            })?;
            let target = output.weights.weights().clone();
            rebalance_periods.push(node * spec.holding);
            targets.push(target.iter().copied().collect::<Vec<f64>>());

            // Hold: accumulate gross returns, drifting the held weights.
            let mut held: DVector<f64> = target;
            let hold_start = spec.window + node * spec.holding;
            for offset in 0..spec.holding {
                let row = hold_start + offset;
                let r = panel.row_vec(row);
                let ret = held.dot(&r);
                gross.push(ret);
                if !spec.frozen_weights {
                    let scale = 1.0 + ret;
                    if scale.abs() < 1e-12 {
                        return Err(BacktestError::DegeneratePath(row));
                    }
                    for i in 0..p {
                        held[i] = held[i] * (1.0 + r[i]) / scale;
                    }
                }
            }
            drifted.push(held.iter().copied().collect::<Vec<f64>>());
        }

        let series = WeightSeries {
            targets,
            drifted,
            rebalance_periods,
        };
        let net = net_returns(&gross, &series, spec.cost)?;
        let to = if num_nodes >= 2 {
            Some(turnover(&series)?)
        } else {
            None
        };
        strategies.push(StrategyBacktest {
            label: strat.label.clone(),
            gross_stats: series_stats(&gross),
            net_stats: series_stats(&net),
            turnover: to,
            gross,
            net,
            series,
        });
    }

    Ok(BacktestReport {
        window: spec.window,
        holding: spec.holding,
        cost: spec.cost,
        num_nodes,
        roster: panel.asset_ids().to_vec(),
        periods,
        strategies,
    })
}

fn restrict_panel(panel: &ReturnPanel, spec: &BacktestSpec) -> Result<ReturnPanel, BacktestError> {
    let labels = panel.time_index();
    let start = match &spec.start {
        Some(s) => labels.iter().position(|l| l >= s).ok_or_else(|| {
            BacktestError::InvalidSpec(format!("start label {s:?} is after the panel"))
        })?,
        None => 0,
    };
    let end = match &spec.end {
        Some(e) => match labels.iter().rposition(|l| l <= e) {
            Some(idx) => idx + 1,
            None => {
                return Err(BacktestError::InvalidSpec(format!(
                    "end label {e:?} is before the panel"
                )))
            }
        },
        None => labels.len(),
    };
    if end <= start {
        return Err(BacktestError::InvalidSpec(
            "start/end filters leave an empty panel".into(),
        ));
    }
    if start == 0 && end == labels.len() {
        return Ok(panel.clone());
    }
    Ok(panel.window(start, end - start)?)
}
