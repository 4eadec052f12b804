//! Command drivers: run a validated [`RunConfig`] end to end and write the
//! artifact set for each command into the output directory.
//!
//! Every run writes its effective config (`run_config.toml`) and a version
//! stamp next to the artifacts. Every JSON artifact is validated on write:
//! the file is parsed back and re-serialized, and the write fails unless
//! the bytes agree.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{
    BacktestConfig, CommandKind, ConfigError, EstimateConfig, RunConfig, SimulateConfig, Threads,
};
use crate::factor::{fit_robust_factors, residuals};
use crate::panel::ReturnPanel;
use crate::portfolio::{estimate_expected_returns, ReturnCovModel};
use crate::sim::{gen_dgp_replication, run_replications};
use crate::strategy::StrategyKind;
use crate::threshold::{
    adaptive_threshold, cross_validate_constant, entry_variances, sample_residual_cov,
    CvDiagnostics, ThresholdConstant,
};

/// Environment variable overriding the configured thread count.
pub const THREADS_ENV_VAR: &str = "ROBUSTMVP_THREADS";

/// Failure class of a run, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverErrorKind {
    /// Configuration problem (exit code 2).
    Config,
    /// Data/ingestion problem (exit code 3).
    Data,
    /// Numerical failure (exit code 4).
    Numerical,
}

/// A classified run failure.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct DriverError {
    /// Failure class.
    pub kind: DriverErrorKind,
    /// Human-readable description.
    pub message: String,
}

impl DriverError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            kind: DriverErrorKind::Config,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            kind: DriverErrorKind::Data,
            message: message.into(),
        }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self {
            kind: DriverErrorKind::Numerical,
            message: message.into(),
        }
    }

    /// The process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            DriverErrorKind::Config => 2,
            DriverErrorKind::Data => 3,
            DriverErrorKind::Numerical => 4,
        }
    }
}

impl From<ConfigError> for DriverError {
    fn from(err: ConfigError) -> Self {
        DriverError::config(err.to_string())
    }
}

impl From<crate::panel::PanelError> for DriverError {
    fn from(err: crate::panel::PanelError) -> Self {
        DriverError::data(err.to_string())
    }
}

/// Summary of a completed run, for callers that want to print something.
#[derive(Debug, Clone)]
pub struct RunSummary {
    /// Artifact files written (relative to the output directory).
    pub artifacts: Vec<String>,
    /// One-paragraph text summary.
    pub text: String,
}

/// Run a validated config end to end.
pub fn run(config: &RunConfig) -> Result<RunSummary, DriverError> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| DriverError::config(format!("cannot create output dir: {e}")))?;
    write_text(
        &config.output_dir.join("run_config.toml"),
        &config.to_toml_string(),
    )?;
    write_text(
        &config.output_dir.join("version.txt"),
        &format!("robust-mvp {}\n", env!("CARGO_PKG_VERSION")),
    )?;

    let pool = build_pool(effective_threads(config.threads)?)?;
    match config.command {
        CommandKind::Simulate => {
            let sim = config.simulate.as_ref().expect("validated");
            pool.install(|| run_simulate(sim, &config.output_dir))
        }
        CommandKind::Estimate => {
            let est = config.estimate.as_ref().expect("validated");
            pool.install(|| run_estimate(est, &config.output_dir))
        }
        CommandKind::Backtest => {
            let bt = config.backtest.as_ref().expect("validated");
            pool.install(|| run_backtest(bt, &config.output_dir))
        }
    }
}

/// The thread count after applying the `ROBUSTMVP_THREADS` override.
pub fn effective_threads(configured: Threads) -> Result<usize, DriverError> {
    match std::env::var(THREADS_ENV_VAR) {
        Ok(value) => {
            if value == "auto" {
                Ok(0)
            } else {
                value.parse::<usize>().map_err(|_| {
                    DriverError::config(format!(
                        "{THREADS_ENV_VAR}={value:?} is not a thread count"
                    ))
                })
            }
        }
        Err(_) => Ok(configured.worker_count()),
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, DriverError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| DriverError::config(format!("thread pool: {e}")))
}

/// Run the simulate command: replicated experiments plus diagnostics.
pub fn run_simulate(config: &SimulateConfig, out_dir: &Path) -> Result<RunSummary, DriverError> {
    let strategies = config
        .strategies
        .iter()
        .map(|name| config.estimation.strategy(name))
        .collect::<Result<Vec<_>, _>>()?;

    let report = run_replications(&config.dgp, config.n_reps, &strategies, config.parallel)
        .map_err(|e| DriverError::numerical(e.to_string()))?;

    write_text(&out_dir.join("sim_report.csv"), &report.to_csv_string())?;
    write_text(&out_dir.join("sim_report.txt"), &report.to_table_string())?;
    write_text(&out_dir.join("metrics.csv"), &report.per_rep_csv_string())?;

    let mut artifacts = vec![
        "sim_report.csv".to_owned(),
        "sim_report.txt".to_owned(),
        "metrics.csv".to_owned(),
    ];

    // Weight-sequence trace of one flagged replication, for the first
    // factor-model strategy in the list.
    if let Some(spec) = strategies
        .iter()
        .find(|s| matches!(s.kind, StrategyKind::RMvp | StrategyKind::PoetMvp))
    {
        let trace = omega_trace(config, spec, config.flag_omega_rep)
            .map_err(|e| DriverError::numerical(e.to_string()))?;
        write_text(&out_dir.join("omega_trace.csv"), &trace)?;
        artifacts.push("omega_trace.csv".to_owned());
    }

    if report.failures.len() > config.tolerate_failures {
        return Err(DriverError::numerical(format!(
            "{} strategy cells failed (tolerance {}): first failure: rep {} {}: {}",
            report.failures.len(),
            config.tolerate_failures,
            report.failures[0].rep,
            report.failures[0].strategy,
            report.failures[0].message,
        )));
    }

    Ok(RunSummary {
        artifacts,
        text: report.to_table_string(),
    })
}

fn omega_trace(
    config: &SimulateConfig,
    spec: &crate::strategy::StrategySpec,
    rep: u64,
) -> Result<String, Box<dyn std::error::Error>> {
    let sample = gen_dgp_replication(&config.dgp, rep)?;
    let fit = fit_robust_factors(&sample.train, &spec.effective_pca())?;
    let shocked = config.dgp.hetero_shock_rows();
    let mut out = String::from("rep,period,omega,shocked\n");
    for (t, &w) in fit.obs_weights().iter().enumerate() {
        out.push_str(&format!(
            "{rep},{t},{w},{}\n",
            if shocked.contains(&t) { 1 } else { 0 }
        ));
    }
    Ok(out)
}

/// Run the estimate command on a CSV panel.
pub fn run_estimate(config: &EstimateConfig, out_dir: &Path) -> Result<RunSummary, DriverError> {
    let panel = ReturnPanel::from_csv_path(&config.panel)?;

    let pca = config.estimation.pca_config();
    let fit =
        fit_robust_factors(&panel, &pca).map_err(|e| DriverError::numerical(e.to_string()))?;
    let resid = residuals(&panel, &fit).map_err(|e| DriverError::numerical(e.to_string()))?;
    let s = sample_residual_cov(&resid).map_err(|e| DriverError::numerical(e.to_string()))?;
    let v = entry_variances(&resid, &s).map_err(|e| DriverError::numerical(e.to_string()))?;

    let threshold_config = config.estimation.threshold_config();
    let mut cv_diag: Option<CvDiagnostics> = None;
    let constant = match threshold_config.constant {
        ThresholdConstant::Fixed(c) => c,
        ThresholdConstant::CrossValidate(_) => {
            match cross_validate_constant(&resid, &threshold_config) {
                Ok((c, diag)) => {
                    cv_diag = Some(diag);
                    c
                }
                // Surface the failure with the loss curve attached.
                Err(crate::threshold::ThresholdError::NoFeasibleConstant(diag)) => {
                    write_text(&out_dir.join("cv_curve.csv"), &diag.to_csv_string())?;
                    return Err(DriverError::numerical(format!(
                        "cross-validation found no feasible constant; curve written to {}",
                        out_dir.join("cv_curve.csv").display()
                    )));
                }
                Err(e) => return Err(DriverError::numerical(format!("cross-validation: {e}"))),
            }
        }
    };
    let sigma_e = adaptive_threshold(&s, &v, constant, panel.num_periods(), threshold_config.rule)
        .map_err(|e| DriverError::numerical(e.to_string()))?;
    let model = ReturnCovModel::assemble(fit.covariance_loadings(), sigma_e.clone())
        .map_err(|e| DriverError::numerical(e.to_string()))?;
    let weights = model
        .mvp_weights()
        .map_err(|e| DriverError::numerical(e.to_string()))?
        .with_tag("r_mvp");
    let mu = estimate_expected_returns(&fit);
    let min_risk = model
        .min_risk()
        .map_err(|e| DriverError::numerical(e.to_string()))?;
    let sharpe = model
        .sharpe_estimate(&mu)
        .map_err(|e| DriverError::numerical(e.to_string()))?;

    write_json(&out_dir.join("factor_fit.json"), &fit)?;
    write_json(&out_dir.join("sigma_e.json"), &sigma_e)?;
    write_json(&out_dir.join("sigma_r.json"), &model)?;
    write_text(
        &out_dir.join("weights.csv"),
        &weights
            .to_csv_string(panel.asset_ids())
            .map_err(|e| DriverError::numerical(e.to_string()))?,
    )?;

    // Diagnostics: objective trace, weight histogram, CV curve when run.
    let mut trace = String::from("iteration,objective\n");
    for (i, obj) in fit.objective_trace().iter().enumerate() {
        trace.push_str(&format!("{i},{obj}\n"));
    }
    write_text(&out_dir.join("objective_trace.csv"), &trace)?;

    write_text(
        &out_dir.join("omega_hist.csv"),
        &weight_histogram(fit.obs_weights()),
    )?;

    let mut artifacts = vec![
        "factor_fit.json".to_owned(),
        "sigma_e.json".to_owned(),
        "sigma_r.json".to_owned(),
        "weights.csv".to_owned(),
        "objective_trace.csv".to_owned(),
        "omega_hist.csv".to_owned(),
    ];
    if let Some(diag) = &cv_diag {
        write_text(&out_dir.join("cv_curve.csv"), &diag.to_csv_string())?;
        artifacts.push("cv_curve.csv".to_owned());
    }

    let summary = serde_json::json!({
        "num_factors": fit.num_factors(),
        "iterations": fit.iterations(),
        "converged": fit.converged(),
        "threshold": fit.threshold(),
        "threshold_constant": constant,
        "residual_sparsity": sigma_e.sparsity(),
        "min_risk": min_risk,
        "sharpe_estimate": sharpe,
    });
    write_json(&out_dir.join("estimate_summary.json"), &summary)?;
    artifacts.push("estimate_summary.json".to_owned());

    Ok(RunSummary {
        artifacts,
        text: format!(
            "estimated {} factors in {} iterations (converged: {}); residual sparsity {:.3}; \
             min risk {:.6e}; Sharpe estimate {:.4}\n",
            fit.num_factors(),
            fit.iterations(),
            fit.converged(),
            sigma_e.sparsity(),
            min_risk,
            sharpe
        ),
    })
}

fn weight_histogram(weights: &[f64]) -> String {
    const BINS: usize = 10;
    let mut counts = [0usize; BINS];
    for &w in weights {
        let bin = ((w / 0.5) * BINS as f64).floor() as usize;
        counts[bin.min(BINS - 1)] += 1;
    }
    let mut out = String::from("bin_low,bin_high,count\n");
    for (i, count) in counts.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{count}\n",
            i as f64 * 0.05,
            (i + 1) as f64 * 0.05
        ));
    }
    out
}

/// Run the backtest command on a CSV panel.
pub fn run_backtest(config: &BacktestConfig, out_dir: &Path) -> Result<RunSummary, DriverError> {
    let panel = ReturnPanel::from_csv_path(&config.panel)?;
    let spec = config.to_spec()?;
    let report = crate::backtest::rolling_backtest(&panel, &spec).map_err(|e| match e {
        crate::backtest::BacktestError::InvalidSpec(_) => DriverError::config(e.to_string()),
        crate::backtest::BacktestError::InsufficientHistory { .. } => {
            DriverError::data(e.to_string())
        }
        other => DriverError::numerical(other.to_string()),
    })?;

    write_json(&out_dir.join("report.json"), &report)?;

    // Long-format weights: strategy, node, asset, target weight.
    let mut weights_csv = String::from("strategy,node,asset_id,weight\n");
    for s in &report.strategies {
        for (node, target) in s.series.targets.iter().enumerate() {
            for (asset, w) in report.roster.iter().zip(target) {
                weights_csv.push_str(&format!("{},{node},{asset},{w}\n", s.label));
            }
        }
    }
    write_text(&out_dir.join("weights.csv"), &weights_csv)?;

    let mut returns_csv = String::from("period,date,strategy,gross,net\n");
    let mut equity_csv = String::from("period,date,strategy,cum_gross,cum_net\n");
    for s in &report.strategies {
        let mut cum_g = 0.0;
        let mut cum_n = 0.0;
        for (i, date) in report.periods.iter().enumerate() {
            returns_csv.push_str(&format!(
                "{i},{date},{},{},{}\n",
                s.label, s.gross[i], s.net[i]
            ));
            cum_g += s.gross[i];
            cum_n += s.net[i];
            equity_csv.push_str(&format!("{i},{date},{},{cum_g},{cum_n}\n", s.label));
        }
    }
    write_text(&out_dir.join("returns.csv"), &returns_csv)?;
    write_text(&out_dir.join("equity_curve.csv"), &equity_csv)?;

    let mut text = format!(
        "{} decision nodes, window {}, holding {}\n{:<18} {:>10} {:>10} {:>9} {:>8} {:>8}\n",
        report.num_nodes,
        report.window,
        report.holding,
        "strategy",
        "CR(gross)",
        "CR(net)",
        "risk",
        "MDD",
        "TO"
    );
    for s in &report.strategies {
        text.push_str(&format!(
            "{:<18} {:>10.4} {:>10.4} {:>9.5} {:>8.4} {:>8.3}\n",
            s.label,
            s.gross_stats.cumulative_return,
            s.net_stats.cumulative_return,
            s.gross_stats.risk,
            s.gross_stats.mdd,
            s.turnover.unwrap_or(f64::NAN),
        ));
    }

    Ok(RunSummary {
        artifacts: vec![
            "report.json".to_owned(),
            "weights.csv".to_owned(),
            "returns.csv".to_owned(),
            "equity_curve.csv".to_owned(),
        ],
        text,
    })
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), DriverError> {
    std::fs::write(path, text)
        .map_err(|e| DriverError::config(format!("cannot write {}: {e}", path.display())))
}

/// Write a JSON artifact and verify it round-trips: parse the written
/// bytes back and re-serialize; the write fails unless both renderings
/// agree byte for byte.
fn write_json<T: Serialize + DeserializeOwned>(
    path: &PathBuf,
    value: &T,
) -> Result<(), DriverError> {
    let rendered = serde_json::to_string_pretty(value)
        .map_err(|e| DriverError::numerical(format!("serialize {}: {e}", path.display())))?;
    let parsed: T = serde_json::from_str(&rendered)
        .map_err(|e| DriverError::numerical(format!("round-trip {}: {e}", path.display())))?;
    let re_rendered = serde_json::to_string_pretty(&parsed)
        .map_err(|e| DriverError::numerical(format!("serialize {}: {e}", path.display())))?;
    if re_rendered != rendered {
        return Err(DriverError::numerical(format!(
            "artifact {} does not round-trip",
            path.display()
        )));
    }
    write_text(path, &rendered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EstimationConfig;
    use crate::sim::{DgpId, DgpSpec};

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("rmvp-driver-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn simulate_writes_all_artifacts() {
        let out = temp_dir("sim");
        let config = SimulateConfig {
            dgp: DgpSpec::new(DgpId::HeteroShocks, 8, 60, 5),
            n_reps: 2,
            strategies: vec!["oracle".into(), "r_mvp".into()],
            estimation: EstimationConfig {
                num_factors: crate::factor::NumFactors::Fixed(2),
                ..EstimationConfig::default()
            },
            tolerate_failures: 0,
            flag_omega_rep: 0,
            parallel: false,
        };
        let summary = run_simulate(&config, &out).unwrap();
        for artifact in &summary.artifacts {
            assert!(out.join(artifact).exists(), "missing {artifact}");
        }
        let trace = std::fs::read_to_string(out.join("omega_trace.csv")).unwrap();
        assert!(trace.lines().count() > 10);
        let _ = std::fs::remove_dir_all(&out);
    }

    #[test]
    fn estimate_writes_artifacts_and_round_trips() {
        let out = temp_dir("est");
        // Synthesize a panel CSV.
        let sample = crate::sim::gen_dgp(&DgpSpec::new(DgpId::Baseline, 6, 50, 11)).unwrap();
        let panel_path = out.join("panel.csv");
        sample.train.to_csv_path(&panel_path).unwrap();

        let config = EstimateConfig {
            panel: panel_path,
            estimation: EstimationConfig {
                num_factors: crate::factor::NumFactors::Fixed(2),
                ..EstimationConfig::default()
            },
        };
        let summary = run_estimate(&config, &out).unwrap();
        for artifact in &summary.artifacts {
            assert!(out.join(artifact).exists(), "missing {artifact}");
        }
        // weights.csv sums to ~1.
        let weights = std::fs::read_to_string(out.join("weights.csv")).unwrap();
        let total: f64 = weights
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
        let _ = std::fs::remove_dir_all(&out);
    }

    #[test]
    fn threads_env_override_parses() {
        // No env set: configured value wins.
        assert_eq!(effective_threads(Threads::Fixed(3)).unwrap(), 3);
    }
}
