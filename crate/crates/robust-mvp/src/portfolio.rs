//! Return covariance assembly and minimum variance portfolio construction.
//!
//! The return covariance is the low-rank-plus-sparse sum `B B' + Sigma_e`.
//! Its inverse is never formed densely on the main path: solves go through
//! the Woodbury identity
//! `(B B' + E)^{-1} = E^{-1} - E^{-1} B (I + B' E^{-1} B)^{-1} B' E^{-1}`,
//! which costs one sparse-side Cholesky plus an `m x m` core solve.
//! Minimum variance weights are `Sigma^{-1} 1 / (1' Sigma^{-1} 1)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factor::FactorFit;
use crate::linalg::{self, LinalgError};
use crate::panel::ReturnPanel;
use crate::threshold::SparseResidualCov;

/// Budget-sum tolerance accepted by [`PortfolioWeights`].
const WEIGHT_SUM_TOL: f64 = 1e-10;

/// Denominator floor below which the covariance is treated as singular.
const SINGULAR_FLOOR: f64 = 1e-12;

/// Errors from portfolio construction.
#[derive(Debug, Error)]
pub enum PortfolioError {
    /// The residual covariance failed its Cholesky factorization.
    #[error("residual covariance is not positive definite")]
    NotPositiveDefinite,

    /// The quadratic form `1' Sigma^{-1} 1` is numerically singular.
    #[error("covariance is numerically singular (|1' Sigma^-1 1| < {SINGULAR_FLOOR:e})")]
    SingularCovariance,

    /// Operand shapes disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Bad parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Weights violate the budget constraint.
    #[error("weights sum to {0}, expected 1 within {WEIGHT_SUM_TOL:e}")]
    BudgetViolation(f64),

    /// Linear algebra failure.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Portfolio weights summing to one (shorting allowed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PortfolioWeightsRepr", into = "PortfolioWeightsRepr")]
pub struct PortfolioWeights {
    weights: DVector<f64>,
    strategy_tag: String,
}

impl PortfolioWeights {
    /// Build weights, enforcing the budget constraint `sum w = 1` within
    /// `1e-10`.
    pub fn new(weights: DVector<f64>, strategy_tag: &str) -> Result<Self, PortfolioError> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(PortfolioError::BudgetViolation(sum));
        }
        Ok(Self {
            weights,
            strategy_tag: strategy_tag.to_owned(),
        })
    }

    /// The weight vector.
    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Which strategy produced these weights.
    pub fn strategy_tag(&self) -> &str {
        &self.strategy_tag
    }

    /// Same weights under a different tag.
    pub fn with_tag(mut self, tag: &str) -> Self {
        self.strategy_tag = tag.to_owned();
        self
    }

    /// Number of assets.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    /// True for an empty weight vector (never produced by this crate).
    pub fn is_empty(&self) -> bool {
        self.weights.len() == 0
    }

    /// Total short exposure `sum |w_i| 1(w_i < 0)`.
    pub fn negative_weight_sum(&self) -> f64 {
        self.weights.iter().filter(|&&w| w < 0.0).map(|w| -w).sum()
    }

    /// CSV rendering (`asset_id,weight`).
    pub fn to_csv_string(&self, asset_ids: &[String]) -> Result<String, PortfolioError> {
        if asset_ids.len() != self.weights.len() {
            return Err(PortfolioError::DimensionMismatch(format!(
                "{} ids for {} weights",
                asset_ids.len(),
                self.weights.len()
            )));
        }
        let mut out = String::from("asset_id,weight\n");
        for (id, w) in asset_ids.iter().zip(self.weights.iter()) {
            out.push_str(&format!("{id},{w}\n"));
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
struct PortfolioWeightsRepr {
    strategy_tag: String,
    weights: Vec<f64>,
}

impl TryFrom<PortfolioWeightsRepr> for PortfolioWeights {
    type Error = PortfolioError;

    fn try_from(repr: PortfolioWeightsRepr) -> Result<Self, Self::Error> {
        PortfolioWeights::new(DVector::from_vec(repr.weights), &repr.strategy_tag)
    }
}

impl From<PortfolioWeights> for PortfolioWeightsRepr {
    fn from(w: PortfolioWeights) -> Self {
        PortfolioWeightsRepr {
            strategy_tag: w.strategy_tag,
            weights: w.weights.iter().copied().collect(),
        }
    }
}

/// The assembled return covariance `B B' + Sigma_e` with a structured
/// inverse.
///
/// Serializes as loadings plus the residual covariance; the factorizations
/// are rebuilt (and revalidated) on deserialization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ReturnCovModelRepr", into = "ReturnCovModelRepr")]
pub struct ReturnCovModel {
    loadings: DMatrix<f64>,
    residual_cov: SparseResidualCov,
    chol_residual: Cholesky<f64, Dyn>,
    /// `Sigma_e^{-1} B`, `p x m`.
    einv_loadings: DMatrix<f64>,
    /// Cholesky of the core `I_m + B' Sigma_e^{-1} B` (absent when `m = 0`).
    chol_core: Option<Cholesky<f64, Dyn>>,
}

impl PartialEq for ReturnCovModel {
    fn eq(&self, other: &Self) -> bool {
        self.loadings == other.loadings && self.residual_cov == other.residual_cov
    }
}

impl ReturnCovModel {
    /// Assemble the covariance model from loadings and a residual
    /// covariance, factorizing the sparse side once.
    pub fn assemble(
        loadings: DMatrix<f64>,
        residual_cov: SparseResidualCov,
    ) -> Result<Self, PortfolioError> {
        let p = residual_cov.num_assets();
        if loadings.nrows() != p {
            return Err(PortfolioError::DimensionMismatch(format!(
                "loadings cover {} assets, residual covariance {p}",
                loadings.nrows()
            )));
        }
        let chol_residual = Cholesky::new(residual_cov.matrix().clone())
            .ok_or(PortfolioError::NotPositiveDefinite)?;
        let m = loadings.ncols();
        let einv_loadings = chol_residual.solve(&loadings);
        let chol_core = if m == 0 {
            None
        } else {
            let core = DMatrix::identity(m, m) + loadings.transpose() * &einv_loadings;
            Some(Cholesky::new(core).ok_or(PortfolioError::NotPositiveDefinite)?)
        };
        Ok(Self {
            loadings,
            residual_cov,
            chol_residual,
            einv_loadings,
            chol_core,
        })
    }

    /// Number of assets `p`.
    pub fn num_assets(&self) -> usize {
        self.loadings.nrows()
    }

    /// Number of factors `m`.
    pub fn num_factors(&self) -> usize {
        self.loadings.ncols()
    }

    /// The loading matrix.
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    /// The thresholded residual covariance.
    pub fn residual_cov(&self) -> &SparseResidualCov {
        &self.residual_cov
    }

    /// The dense covariance `B B' + Sigma_e` (derived on demand).
    pub fn sigma_r(&self) -> DMatrix<f64> {
        &self.loadings * self.loadings.transpose() + self.residual_cov.matrix()
    }

    /// Solve `Sigma_r x = rhs` through the Woodbury identity.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>, PortfolioError> {
        if rhs.len() != self.num_assets() {
            return Err(PortfolioError::DimensionMismatch(format!(
                "rhs has {} entries for {} assets",
                rhs.len(),
                self.num_assets()
            )));
        }
        let base = self.chol_residual.solve(rhs);
        match &self.chol_core {
            None => Ok(base),
            Some(core) => {
                let projected = self.loadings.transpose() * &base;
                let corrected = core.solve(&projected);
                Ok(base - &self.einv_loadings * corrected)
            }
        }
    }

    /// The dense inverse of `Sigma_r`, materialized column by column from
    /// the structured solve. Intended for inspection and tests.
    pub fn inverse(&self) -> DMatrix<f64> {
        let p = self.num_assets();
        let einv = self.chol_residual.inverse();
        match &self.chol_core {
            None => einv,
            Some(core) => {
                let correction =
                    &self.einv_loadings * core.solve(&self.einv_loadings.transpose().clone_owned());
                let mut out = einv - correction;
                // The identity is symmetric; enforce it exactly.
                for i in 0..p {
                    for j in (i + 1)..p {
                        let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                        out[(i, j)] = avg;
                        out[(j, i)] = avg;
                    }
                }
                out
            }
        }
    }

    /// Minimum variance weights `Sigma^{-1} 1 / (1' Sigma^{-1} 1)`.
    pub fn mvp_weights(&self) -> Result<PortfolioWeights, PortfolioError> {
        let ones = DVector::from_element(self.num_assets(), 1.0);
        let x = self.solve(&ones)?;
        let denom: f64 = x.iter().sum();
        if denom.abs() < SINGULAR_FLOOR {
            return Err(PortfolioError::SingularCovariance);
        }
        PortfolioWeights::new(x / denom, "mvp")
    }

    /// The minimum attainable variance `1 / (1' Sigma^{-1} 1)`.
    pub fn min_risk(&self) -> Result<f64, PortfolioError> {
        let ones = DVector::from_element(self.num_assets(), 1.0);
        let x = self.solve(&ones)?;
        let denom: f64 = x.iter().sum();
        if denom.abs() < SINGULAR_FLOOR {
            return Err(PortfolioError::SingularCovariance);
        }
        Ok(1.0 / denom)
    }

    /// Plug-in Sharpe estimate `1' Sigma^{-1} mu / sqrt(1' Sigma^{-1} 1)`.
    pub fn sharpe_estimate(&self, expected_returns: &DVector<f64>) -> Result<f64, PortfolioError> {
        if expected_returns.len() != self.num_assets() {
            return Err(PortfolioError::DimensionMismatch(format!(
                "mu has {} entries for {} assets",
                expected_returns.len(),
                self.num_assets()
            )));
        }
        let ones = DVector::from_element(self.num_assets(), 1.0);
        let x = self.solve(&ones)?;
        let denom: f64 = x.iter().sum();
        if denom.abs() < SINGULAR_FLOOR {
            return Err(PortfolioError::SingularCovariance);
        }
        Ok(x.dot(expected_returns) / denom.sqrt())
    }
}

#[derive(Serialize, Deserialize)]
struct ReturnCovModelRepr {
    /// Row-major `p x m`.
    loadings: Vec<Vec<f64>>,
    residual_cov: SparseResidualCov,
}

impl TryFrom<ReturnCovModelRepr> for ReturnCovModel {
    type Error = PortfolioError;

    fn try_from(repr: ReturnCovModelRepr) -> Result<Self, Self::Error> {
        let nrows = repr.loadings.len();
        let ncols = repr.loadings.first().map_or(0, Vec::len);
        if repr.loadings.iter().any(|r| r.len() != ncols) {
            return Err(PortfolioError::DimensionMismatch(
                "ragged loading rows".into(),
            ));
        }
        let loadings =
            DMatrix::from_row_iterator(nrows, ncols, repr.loadings.iter().flatten().copied());
        ReturnCovModel::assemble(loadings, repr.residual_cov)
    }
}

impl From<ReturnCovModel> for ReturnCovModelRepr {
    fn from(model: ReturnCovModel) -> Self {
        ReturnCovModelRepr {
            loadings: crate::factor::matrix_to_rows(&model.loadings),
            residual_cov: model.residual_cov,
        }
    }
}

/// Minimum variance weights from a dense SPD covariance (used by baselines
/// and oracles). Solves the linear system; no explicit inverse.
pub fn mvp_weights_dense(sigma: &DMatrix<f64>) -> Result<PortfolioWeights, PortfolioError> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(PortfolioError::DimensionMismatch(format!(
            "covariance is {}x{}",
            p,
            sigma.ncols()
        )));
    }
    let chol = Cholesky::new(sigma.clone()).ok_or(PortfolioError::SingularCovariance)?;
    let x = chol.solve(&DVector::from_element(p, 1.0));
    let denom: f64 = x.iter().sum();
    if denom.abs() < SINGULAR_FLOOR {
        return Err(PortfolioError::SingularCovariance);
    }
    PortfolioWeights::new(x / denom, "mvp")
}

/// Minimum variance `1 / (1' Sigma^{-1} 1)` from a dense SPD covariance.
pub fn min_risk_dense(sigma: &DMatrix<f64>) -> Result<f64, PortfolioError> {
    let p = sigma.nrows();
    let chol = Cholesky::new(sigma.clone()).ok_or(PortfolioError::SingularCovariance)?;
    let x = chol.solve(&DVector::from_element(p, 1.0));
    let denom: f64 = x.iter().sum();
    if denom.abs() < SINGULAR_FLOOR {
        return Err(PortfolioError::SingularCovariance);
    }
    Ok(1.0 / denom)
}

/// Expected returns implied by a factor fit: `B` times the time-mean of the
/// factor paths.
pub fn estimate_expected_returns(fit: &FactorFit) -> DVector<f64> {
    let mean = fit.factors().row_mean();
    let mean = DVector::from_iterator(fit.num_factors(), mean.iter().copied());
    fit.loadings() * mean
}

/// Shrinkage intensity for the linear-shrinkage baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum ShrinkageIntensity {
    /// Closed-form squared-error-minimizing plug-in (the literal string
    /// `"auto"` in configs).
    Auto(crate::factor::AutoTag),
    /// Fixed intensity in `[0, 1]`.
    Fixed(f64),
}

impl ShrinkageIntensity {
    /// Convenience constructor for the plug-in intensity.
    pub const AUTO: ShrinkageIntensity = ShrinkageIntensity::Auto(crate::factor::AutoTag::Auto);
}

impl Default for ShrinkageIntensity {
    fn default() -> Self {
        ShrinkageIntensity::AUTO
    }
}

/// Mean-subtracted sample covariance with the `1/(T-1)` normalization.
pub fn sample_covariance(panel: &ReturnPanel) -> DMatrix<f64> {
    let t = panel.num_periods();
    let means = panel.values().row_mean();
    let mut centered = panel.values().clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let mut s = centered.transpose() * &centered / (t as f64 - 1.0);
    linalg::symmetrize(&mut s);
    s
}

/// Linear shrinkage of the sample covariance toward the scaled identity
/// `nu I` with `nu = trace(S)/p`: returns `(1 - rho) S + rho nu I`.
///
/// `Auto` picks the squared-error-minimizing plug-in intensity from the
/// centered observations (identity-target variant).
pub fn linear_shrinkage_cov(
    panel: &ReturnPanel,
    intensity: ShrinkageIntensity,
) -> Result<DMatrix<f64>, PortfolioError> {
    let t = panel.num_periods();
    let p = panel.num_assets();

    // The plug-in intensity derivation uses the 1/T normalization.
    let means = panel.values().row_mean();
    let mut centered = panel.values().clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let mut s = centered.transpose() * &centered / t as f64;
    linalg::symmetrize(&mut s);

    let nu = s.trace() / p as f64;
    let rho = match intensity {
        ShrinkageIntensity::Fixed(r) => {
            if !(0.0..=1.0).contains(&r) {
                return Err(PortfolioError::InvalidParameter(format!(
                    "shrinkage intensity {r} outside [0, 1]"
                )));
            }
            r
        }
        ShrinkageIntensity::Auto(_) => {
            // Squared distance of S from its identity target, per-entry
            // normalized; capped dispersion of per-period outer products.
            let pf = p as f64;
            let mut d2 = 0.0;
            for i in 0..p {
                for j in 0..p {
                    let target = if i == j { nu } else { 0.0 };
                    d2 += (s[(i, j)] - target).powi(2);
                }
            }
            d2 /= pf;
            let mut b2_raw = 0.0;
            for k in 0..t {
                let x = centered.row(k).transpose();
                let outer = &x * x.transpose();
                let mut dist = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        dist += (outer[(i, j)] - s[(i, j)]).powi(2);
                    }
                }
                b2_raw += dist / pf;
            }
            b2_raw /= (t * t) as f64;
            let b2 = b2_raw.min(d2);
            if d2 > 0.0 {
                b2 / d2
            } else {
                0.0
            }
        }
    };

    let mut out = s * (1.0 - rho);
    for i in 0..p {
        out[(i, i)] += rho * nu;
    }
    Ok(out)
}

/// The 1/N portfolio.
pub fn equal_weight(num_assets: usize) -> Result<PortfolioWeights, PortfolioError> {
    if num_assets == 0 {
        return Err(PortfolioError::InvalidParameter(
            "equal weight needs at least one asset".into(),
        ));
    }
    PortfolioWeights::new(
        DVector::from_element(num_assets, 1.0 / num_assets as f64),
        "equal_weight",
    )
}

/// Minimum variance weights from the mean-subtracted sample covariance.
///
/// Requires `T > p`; rank-deficient sample covariances are surfaced as
/// [`PortfolioError::SingularCovariance`], never regularized.
pub fn sample_cov_mvp(panel: &ReturnPanel) -> Result<PortfolioWeights, PortfolioError> {
    if panel.num_periods() <= panel.num_assets() {
        return Err(PortfolioError::SingularCovariance);
    }
    let s = sample_covariance(panel);
    Ok(mvp_weights_dense(&s)?.with_tag("sample_mvp"))
}
