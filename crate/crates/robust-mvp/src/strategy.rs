//! Strategy catalogue: one entry point that fits any of the compared
//! portfolio rules on a training panel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::{
    fit_robust_factors, residuals, FactorError, FactorFit, NumFactors, RobustPcaConfig,
};
use crate::panel::ReturnPanel;
use crate::portfolio::{
    equal_weight, linear_shrinkage_cov, mvp_weights_dense, sample_cov_mvp, sample_covariance,
    PortfolioError, PortfolioWeights, ReturnCovModel, ShrinkageIntensity,
};
use crate::threshold::{
    adaptive_threshold, cross_validate_constant, entry_variances, sample_residual_cov,
    ThresholdConfig, ThresholdConstant, ThresholdError,
};

/// Errors from fitting a strategy.
#[derive(Debug, Error)]
pub enum StrategyError {
    /// Factor estimation failed.
    #[error("factor estimation: {0}")]
    Factor(#[from] FactorError),

    /// Residual thresholding failed.
    #[error("residual thresholding: {0}")]
    Threshold(#[from] ThresholdError),

    /// Portfolio construction failed.
    #[error("portfolio construction: {0}")]
    Portfolio(#[from] PortfolioError),

    /// The oracle strategy needs the true covariance.
    #[error("oracle strategy requires a known true covariance")]
    OracleUnavailable,
}

/// Which portfolio rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Reweighted-PCA factor covariance plus thresholded residuals.
    RMvp,
    /// Classic-PCA factor covariance plus thresholded residuals
    /// (threshold quantile forced to 1).
    PoetMvp,
    /// Minimum variance on the plain sample covariance.
    SampleMvp,
    /// 1/N.
    EqualWeight,
    /// Minimum variance on the identity-target linear shrinkage covariance.
    LinearShrinkageMvp,
    /// Minimum variance on the true covariance (simulation only).
    OracleMvp,
}

/// A fully specified strategy: the rule plus its estimator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    /// The portfolio rule.
    pub kind: StrategyKind,
    /// Report label.
    pub label: String,
    /// Factor estimation settings (factor-model strategies).
    #[serde(default)]
    pub pca: RobustPcaConfig,
    /// Residual thresholding settings (factor-model strategies).
    #[serde(default)]
    pub threshold: ThresholdConfig,
    /// Shrinkage intensity (linear-shrinkage strategy).
    #[serde(default)]
    pub shrinkage: ShrinkageIntensity,
}

impl StrategySpec {
    /// The shock-adaptive strategy with default settings and `m` factors.
    pub fn r_mvp(num_factors: NumFactors) -> Self {
        Self {
            kind: StrategyKind::RMvp,
            label: "r_mvp".into(),
            pca: RobustPcaConfig {
                num_factors,
                ..RobustPcaConfig::default()
            },
            threshold: ThresholdConfig::default(),
            shrinkage: ShrinkageIntensity::AUTO,
        }
    }

    /// The classic-PCA strategy with default settings and `m` factors.
    pub fn poet_mvp(num_factors: NumFactors) -> Self {
        Self {
            kind: StrategyKind::PoetMvp,
            label: "poet".into(),
            pca: RobustPcaConfig {
                num_factors,
                threshold_quantile: 1.0,
                ..RobustPcaConfig::default()
            },
            threshold: ThresholdConfig::default(),
            shrinkage: ShrinkageIntensity::AUTO,
        }
    }

    /// Sample-covariance minimum variance.
    pub fn sample_mvp() -> Self {
        Self {
            kind: StrategyKind::SampleMvp,
            label: "sample".into(),
            pca: RobustPcaConfig::default(),
            threshold: ThresholdConfig::default(),
            shrinkage: ShrinkageIntensity::AUTO,
        }
    }

    /// The 1/N benchmark.
    pub fn equal_weight() -> Self {
        Self {
            kind: StrategyKind::EqualWeight,
            label: "equal_weight".into(),
            pca: RobustPcaConfig::default(),
            threshold: ThresholdConfig::default(),
            shrinkage: ShrinkageIntensity::AUTO,
        }
    }

    /// Identity-target linear shrinkage minimum variance.
    pub fn linear_shrinkage() -> Self {
        Self {
            kind: StrategyKind::LinearShrinkageMvp,
            label: "linear_shrinkage".into(),
            pca: RobustPcaConfig::default(),
            threshold: ThresholdConfig::default(),
            shrinkage: ShrinkageIntensity::AUTO,
        }
    }

    /// The infeasible oracle (simulation only).
    pub fn oracle_mvp() -> Self {
        Self {
            kind: StrategyKind::OracleMvp,
            label: "oracle".into(),
            pca: RobustPcaConfig::default(),
            threshold: ThresholdConfig::default(),
            shrinkage: ShrinkageIntensity::AUTO,
        }
    }

    /// The factor config actually used at fit time (the classic strategy
    /// pins the threshold quantile to 1).
    pub fn effective_pca(&self) -> RobustPcaConfig {
        let mut pca = self.pca.clone();
        if self.kind == StrategyKind::PoetMvp {
            pca.threshold_quantile = 1.0;
        }
        pca
    }
}

/// Everything a strategy fit produces.
#[derive(Debug, Clone)]
pub struct StrategyOutput {
    /// Portfolio weights tagged with the strategy label.
    pub weights: PortfolioWeights,
    /// The covariance estimate behind the weights, when one exists.
    pub sigma_hat: Option<DMatrix<f64>>,
    /// The factor fit, for factor-model strategies.
    pub factor_fit: Option<FactorFit>,
    /// The thresholding constant actually used (after cross-validation).
    pub threshold_constant: Option<f64>,
}

/// Fit `spec` on a training panel. `truth_sigma` supplies the true
/// covariance for the oracle strategy and must be `None` on real data.
pub fn fit_strategy(
    spec: &StrategySpec,
    panel: &ReturnPanel,
    truth_sigma: Option<&DMatrix<f64>>,
) -> Result<StrategyOutput, StrategyError> {
    match spec.kind {
        StrategyKind::RMvp | StrategyKind::PoetMvp => {
            let fit = fit_robust_factors(panel, &spec.effective_pca())?;
            let resid = residuals(panel, &fit)?;
            let s = sample_residual_cov(&resid)?;
            let v = entry_variances(&resid, &s)?;
            let constant = match spec.threshold.constant {
                ThresholdConstant::Fixed(c) => c,
                ThresholdConstant::CrossValidate(_) => {
                    cross_validate_constant(&resid, &spec.threshold)?.0
                }
            };
            let sigma_e =
                adaptive_threshold(&s, &v, constant, panel.num_periods(), spec.threshold.rule)?;
            let model = ReturnCovModel::assemble(fit.covariance_loadings(), sigma_e)?;
            let weights = model.mvp_weights()?.with_tag(&spec.label);
            Ok(StrategyOutput {
                weights,
                sigma_hat: Some(model.sigma_r()),
                factor_fit: Some(fit),
                threshold_constant: Some(constant),
            })
        }
        StrategyKind::SampleMvp => {
            let weights = sample_cov_mvp(panel)?.with_tag(&spec.label);
            Ok(StrategyOutput {
                weights,
                sigma_hat: Some(sample_covariance(panel)),
                factor_fit: None,
                threshold_constant: None,
            })
        }
        StrategyKind::EqualWeight => Ok(StrategyOutput {
            weights: equal_weight(panel.num_assets())?.with_tag(&spec.label),
            sigma_hat: None,
            factor_fit: None,
            threshold_constant: None,
        }),
        StrategyKind::LinearShrinkageMvp => {
            let sigma = linear_shrinkage_cov(panel, spec.shrinkage)?;
            let weights = mvp_weights_dense(&sigma)?.with_tag(&spec.label);
            Ok(StrategyOutput {
                weights,
                sigma_hat: Some(sigma),
                factor_fit: None,
                threshold_constant: None,
            })
        }
        StrategyKind::OracleMvp => {
            let sigma = truth_sigma.ok_or(StrategyError::OracleUnavailable)?;
            let weights = mvp_weights_dense(sigma)?.with_tag(&spec.label);
            Ok(StrategyOutput {
                weights,
                sigma_hat: Some(sigma.clone()),
                factor_fit: None,
                threshold_constant: None,
            })
        }
    }
}
