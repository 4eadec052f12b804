//! Shock-adaptive factor model estimation by iteratively reweighted PCA.
//!
//! Each period receives a data-driven weight: 1/2 while its residual norm
//! stays below a quantile-based threshold, decaying as `threshold / (2 norm)`
//! beyond it. The loadings are `sqrt(p)` times the top eigenvectors of the
//! weighted scatter `(1/T) sum_t w_t r_t r_t'`, and factors are recovered as
//! `F_t = B' r_t / p` under the normalization `B' B / p = I`. Setting the
//! threshold quantile to 1.0 forces every weight to 1/2 and the fit collapses
//! to classic PCA of the sample scatter.
//!
//! The whole fit is deterministic: same panel and config give a bit-identical
//! result.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::panel::ReturnPanel;

/// Floor applied to the squared-residual radicand before taking square
/// roots, guarding round-off on exact fits.
const RESIDUAL_SQ_FLOOR: f64 = 1e-300;

/// Tolerance on `||B'B/p - I||_F` accepted by [`FactorFit`] constructors.
const IDENTIFICATION_TOL: f64 = 1e-8;

/// Errors from factor estimation.
#[derive(Debug, Error)]
pub enum FactorError {
    /// The robustness threshold must be positive.
    #[error("invalid threshold {0}: must be positive and finite")]
    InvalidTau(f64),

    /// Bad configuration value.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A per-period weight vector has the wrong length.
    #[error("length mismatch: expected {expected} weights, got {actual}")]
    LengthMismatch {
        /// Expected length (number of periods).
        expected: usize,
        /// Provided length.
        actual: usize,
    },

    /// Operand shapes disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Eigensolver failure.
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    /// A deserialized fit violates an invariant.
    #[error("invalid factor fit: {0}")]
    InvalidFit(String),
}

/// Requested number of factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum NumFactors {
    /// Select by information criterion up to the configured bound.
    Auto(AutoTag),
    /// Use exactly this many factors.
    Fixed(usize),
}

/// Marker so `"auto"` round-trips through config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    /// The literal string `auto`.
    Auto,
}

impl NumFactors {
    /// Convenience constructor for the automatic rule.
    pub const AUTO: NumFactors = NumFactors::Auto(AutoTag::Auto);
}

impl Default for NumFactors {
    fn default() -> Self {
        NumFactors::AUTO
    }
}

/// Eigenvector sign conventions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignRule {
    /// Flip columns so the entry of largest absolute value is positive,
    /// ties to the lowest index.
    #[default]
    LargestAbsPositive,
}

/// Configuration of the iteratively reweighted PCA fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobustPcaConfig {
    /// Number of factors, fixed or selected automatically.
    pub num_factors: NumFactors,
    /// Quantile of residual norms used as the robustness threshold each
    /// iteration; 1.0 reduces the fit to classic PCA.
    pub threshold_quantile: f64,
    /// Maximum number of reweighting iterations.
    pub max_iterations: usize,
    /// Convergence tolerance on the absolute change of the summed squared
    /// residual norms.
    pub tolerance: f64,
    /// Upper bound of the factor-number search when `num_factors` is auto.
    pub max_factor_search: usize,
    /// Eigenvector sign convention.
    pub sign_rule: SignRule,
}

impl Default for RobustPcaConfig {
    fn default() -> Self {
        Self {
            num_factors: NumFactors::AUTO,
            threshold_quantile: 0.9,
            max_iterations: 100,
            tolerance: 1e-8,
            max_factor_search: 8,
            sign_rule: SignRule::default(),
        }
    }
}

impl RobustPcaConfig {
    /// Fixed number of factors, all other settings at their defaults.
    pub fn with_num_factors(m: usize) -> Self {
        Self {
            num_factors: NumFactors::Fixed(m),
            ..Self::default()
        }
    }

    /// Classic-PCA configuration: quantile 1.0 weighs every period by 1/2.
    pub fn classic(m: usize) -> Self {
        Self {
            num_factors: NumFactors::Fixed(m),
            threshold_quantile: 1.0,
            ..Self::default()
        }
    }

    fn validate(&self, t: usize, p: usize) -> Result<(), FactorError> {
        if !(self.threshold_quantile > 0.0 && self.threshold_quantile <= 1.0) {
            return Err(FactorError::InvalidConfig(format!(
                "threshold_quantile {} not in (0, 1]",
                self.threshold_quantile
            )));
        }
        if self.max_iterations < 1 {
            return Err(FactorError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.tolerance < 0.0 || self.tolerance.is_nan() {
            return Err(FactorError::InvalidConfig(format!(
                "tolerance {} must be nonnegative",
                self.tolerance
            )));
        }
        let bound = t.min(p);
        if let NumFactors::Fixed(m) = self.num_factors {
            if m > bound {
                return Err(FactorError::InvalidConfig(format!(
                    "num_factors {m} exceeds min(T, p) = {bound}"
                )));
            }
        } else if self.max_factor_search > bound {
            return Err(FactorError::InvalidConfig(format!(
                "max_factor_search {} exceeds min(T, p) = {bound}",
                self.max_factor_search
            )));
        }
        Ok(())
    }
}

/// A fitted factor model.
///
/// Guaranteed by construction: `||B'B/p - I||_F <= 1e-8`, every per-period
/// weight lies in `(0, 1/2]`, and `m <= min(T, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorFitRepr", into = "FactorFitRepr")]
pub struct FactorFit {
    loadings: DMatrix<f64>,
    factors: DMatrix<f64>,
    obs_weights: Vec<f64>,
    threshold: f64,
    num_factors: usize,
    iterations: usize,
    final_delta: f64,
    converged: bool,
    degenerate_spectrum: bool,
    objective_trace: Vec<f64>,
}

impl FactorFit {
    /// Loadings `B` (`p x m`), columns scaled so `B'B/p = I`.
    pub fn loadings(&self) -> &DMatrix<f64> {
        &self.loadings
    }

    /// Factor paths (`T x m`), row `t` holding `F_t`.
    pub fn factors(&self) -> &DMatrix<f64> {
        &self.factors
    }

    /// Per-period robustness weights in `(0, 1/2]`.
    pub fn obs_weights(&self) -> &[f64] {
        &self.obs_weights
    }

    /// Final residual-norm threshold.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Number of factors `m`.
    pub fn num_factors(&self) -> usize {
        self.num_factors
    }

    /// Reweighting iterations performed.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Last absolute change of the objective.
    pub fn final_delta(&self) -> f64 {
        self.final_delta
    }

    /// Whether the loop stopped below tolerance (as opposed to hitting the
    /// iteration cap).
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Set when the spectral gap at the cut was below `1e-10 * lambda_1` in
    /// the final iteration; the returned basis is then a convention, not an
    /// identified direction.
    pub fn degenerate_spectrum(&self) -> bool {
        self.degenerate_spectrum
    }

    /// Summed squared residual norms per iteration (index 0 is the classic
    /// PCA initialization).
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    /// Loadings rescaled for covariance assembly: `B S_F^{1/2}` with `S_F`
    /// the weight-normalized factor second moment
    /// `sum_t w_t F_t F_t' / sum_t w_t`.
    ///
    /// Under the normalization `B'B/p = I` the factor paths carry the
    /// variance scale, so the low-rank covariance part is `B S_F B'` rather
    /// than `B B'`. With every weight at 1/2 this reduces exactly to the
    /// classic rank-`m` spectral truncation of the sample scatter.
    pub fn covariance_loadings(&self) -> DMatrix<f64> {
        let m = self.num_factors;
        if m == 0 {
            return self.loadings.clone();
        }
        let weight_sum: f64 = self.obs_weights.iter().sum();
        let mut second_moment = DMatrix::zeros(m, m);
        for (t, &w) in self.obs_weights.iter().enumerate() {
            let f = self.factors.row(t);
            for i in 0..m {
                for j in 0..m {
                    second_moment[(i, j)] += w * f[i] * f[j];
                }
            }
        }
        second_moment /= weight_sum;
        // Symmetric square root of the m x m second moment.
        let eig = second_moment.symmetric_eigen();
        let mut root = DMatrix::zeros(m, m);
        for k in 0..m {
            let scale = eig.eigenvalues[k].max(0.0).sqrt();
            let v = eig.eigenvectors.column(k);
            for i in 0..m {
                for j in 0..m {
                    root[(i, j)] += scale * v[i] * v[j];
                }
            }
        }
        &self.loadings * root
    }

    fn validate(&self) -> Result<(), FactorError> {
        let (p, m) = self.loadings.shape();
        let t = self.factors.nrows();
        if self.factors.ncols() != m {
            return Err(FactorError::InvalidFit(format!(
                "factors have {} columns, expected {m}",
                self.factors.ncols()
            )));
        }
        if self.num_factors != m {
            return Err(FactorError::InvalidFit(format!(
                "num_factors {} disagrees with loading shape {m}",
                self.num_factors
            )));
        }
        if m > t.min(p) {
            return Err(FactorError::InvalidFit(format!(
                "{m} factors exceed min(T, p) = {}",
                t.min(p)
            )));
        }
        if self.obs_weights.len() != t {
            return Err(FactorError::InvalidFit(format!(
                "{} weights for {t} periods",
                self.obs_weights.len()
            )));
        }
        for (i, &w) in self.obs_weights.iter().enumerate() {
            if !(w > 0.0 && w <= 0.5) {
                return Err(FactorError::InvalidFit(format!(
                    "weight {w} at period {i} outside (0, 1/2]"
                )));
            }
        }
        // Identification: B'B/p = I within 1e-8 in Frobenius norm.
        let gram = self.loadings.transpose() * &self.loadings / p as f64;
        let mut dev = 0.0;
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                dev += (gram[(i, j)] - target).powi(2);
            }
        }
        if dev.sqrt() > IDENTIFICATION_TOL {
            return Err(FactorError::InvalidFit(format!(
                "loadings violate B'B/p = I by {:.3e}",
                dev.sqrt()
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct FactorFitRepr {
    num_factors: usize,
    threshold: f64,
    iterations: usize,
    final_delta: f64,
    converged: bool,
    degenerate_spectrum: bool,
    /// Row-major `p x m`.
    loadings: Vec<Vec<f64>>,
    /// Row-major `T x m`.
    factors: Vec<Vec<f64>>,
    obs_weights: Vec<f64>,
    objective_trace: Vec<f64>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, FactorError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(FactorError::InvalidFit(format!(
                "{what}: ragged row {i} ({} vs {ncols})",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_row_iterator(
        nrows,
        ncols,
        rows.iter().flatten().copied(),
    ))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl TryFrom<FactorFitRepr> for FactorFit {
    type Error = FactorError;

    fn try_from(repr: FactorFitRepr) -> Result<Self, Self::Error> {
        let fit = FactorFit {
            loadings: rows_to_matrix(&repr.loadings, "loadings")?,
            factors: rows_to_matrix(&repr.factors, "factors")?,
            obs_weights: repr.obs_weights,
            threshold: repr.threshold,
            num_factors: repr.num_factors,
            iterations: repr.iterations,
            final_delta: repr.final_delta,
            converged: repr.converged,
            degenerate_spectrum: repr.degenerate_spectrum,
            objective_trace: repr.objective_trace,
        };
        fit.validate()?;
        Ok(fit)
    }
}

impl From<FactorFit> for FactorFitRepr {
    fn from(fit: FactorFit) -> Self {
        FactorFitRepr {
            num_factors: fit.num_factors,
            threshold: fit.threshold,
            iterations: fit.iterations,
            final_delta: fit.final_delta,
            converged: fit.converged,
            degenerate_spectrum: fit.degenerate_spectrum,
            loadings: matrix_to_rows(&fit.loadings),
            factors: matrix_to_rows(&fit.factors),
            obs_weights: fit.obs_weights,
            objective_trace: fit.objective_trace,
        }
    }
}

/// The per-period weight: 1/2 for residual norms up to `threshold`,
/// `threshold / (2 norm)` beyond it. Continuous at the threshold.
pub fn huber_weight(residual_norm: f64, threshold: f64) -> Result<f64, FactorError> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(FactorError::InvalidTau(threshold));
    }
    if residual_norm <= threshold {
        Ok(0.5)
    } else {
        Ok(0.5 * threshold / residual_norm)
    }
}

/// Weighted second-moment scatter `(1/T) sum_t w_t r_t r_t'`, symmetrized
/// after accumulation so the output is exactly symmetric.
pub fn weighted_scatter(panel: &ReturnPanel, weights: &[f64]) -> Result<DMatrix<f64>, FactorError> {
    let t = panel.num_periods();
    if weights.len() != t {
        return Err(FactorError::LengthMismatch {
            expected: t,
            actual: weights.len(),
        });
    }
    for (i, &w) in weights.iter().enumerate() {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(FactorError::InvalidConfig(format!(
                "weight {w} at period {i} must be finite and nonnegative"
            )));
        }
    }
    // (1/T) R' diag(w) R as one product: scale the rows, then multiply.
    let mut scaled = panel.values().clone();
    for (i, &w) in weights.iter().enumerate() {
        scaled.row_mut(i).scale_mut(w);
    }
    let mut scatter = scaled.transpose() * panel.values() / t as f64;
    linalg::symmetrize(&mut scatter);
    Ok(scatter)
}

/// One PCA step on a symmetric scatter matrix.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    /// `sqrt(p)` times the top-`m` eigenvectors, sign-fixed.
    pub loadings: DMatrix<f64>,
    /// The `m` largest eigenvalues in descending order.
    pub eigenvalues: DVector<f64>,
    /// True when the spectral gap at the cut is below `1e-10 * lambda_1`.
    pub degenerate: bool,
}

/// Extract `sqrt(p)`-scaled top-`m` eigenvectors of a symmetric scatter.
///
/// Eigenvalues come out in descending order; signs follow `sign_rule`.
/// Factors are recovered from the result as `F_t = B' r_t / p`, see
/// [`factors_from_loadings`].
pub fn pca_step(
    scatter: &DMatrix<f64>,
    num_factors: usize,
    sign_rule: SignRule,
) -> Result<PcaBasis, FactorError> {
    let p = scatter.nrows();
    if num_factors > p {
        return Err(FactorError::DimensionMismatch(format!(
            "{num_factors} factors requested from a {p}x{p} scatter"
        )));
    }
    let (values, vectors) = linalg::sorted_symmetric_eigen(scatter)?;
    let mut loadings = vectors.columns(0, num_factors).into_owned();
    match sign_rule {
        SignRule::LargestAbsPositive => linalg::apply_sign_convention(&mut loadings),
    }
    loadings *= (p as f64).sqrt();

    let degenerate = if num_factors == 0 || num_factors == p {
        false
    } else {
        let lambda_1 = values[0].abs();
        (values[num_factors - 1] - values[num_factors]) < 1e-10 * lambda_1
    };

    Ok(PcaBasis {
        loadings,
        eigenvalues: values.rows(0, num_factors).into_owned(),
        degenerate,
    })
}

/// Factor paths implied by a loading matrix: row `t` is `B' r_t / p`.
pub fn factors_from_loadings(panel: &ReturnPanel, loadings: &DMatrix<f64>) -> DMatrix<f64> {
    panel.values() * loadings / panel.num_assets() as f64
}

/// Squared residual norms `||r_t - B F_t||^2` for `F_t = B' r_t / p`,
/// computed as `r_t'r_t - r_t' B B' r_t / p` (the two agree under the loading
/// normalization) and floored at a tiny constant before square roots.
fn residual_sq_norms(panel: &ReturnPanel, loadings: &DMatrix<f64>) -> Vec<f64> {
    let p = panel.num_assets() as f64;
    let t = panel.num_periods();
    // T x m matrix of B' r_t rows.
    let projected = panel.values() * loadings;
    (0..t)
        .map(|i| {
            let total = panel.values().row(i).norm_squared();
            let explained = projected.row(i).norm_squared() / p;
            (total - explained).max(RESIDUAL_SQ_FLOOR)
        })
        .collect()
}

/// Empirical quantile by linear interpolation between order statistics
/// (the common `(n-1)q` convention); `q = 1` returns the maximum.
pub(crate) fn interpolated_quantile(values: &[f64], q: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Fit the factor model by iterating threshold, weights and weighted PCA.
///
/// Initialization is classic PCA of the sample scatter. Each iteration
/// recomputes the threshold as the configured quantile of current residual
/// norms, reweights every period, rebuilds the weighted scatter and extracts
/// a fresh basis. The loop stops when the absolute change of the summed
/// squared residual norms drops below `tolerance` or the iteration cap is
/// reached; hitting the cap is not an error and the last iterate is returned.
pub fn fit_robust_factors(
    panel: &ReturnPanel,
    config: &RobustPcaConfig,
) -> Result<FactorFit, FactorError> {
    let t = panel.num_periods();
    let p = panel.num_assets();
    config.validate(t, p)?;

    // Classic-PCA initialization.
    let init_scatter = weighted_scatter(panel, &vec![1.0; t])?;
    let m = match config.num_factors {
        NumFactors::Fixed(m) => m,
        NumFactors::Auto(_) => {
            // Weights for the selection criterion come from one classic-PCA
            // pass at the search bound.
            let basis = pca_step(&init_scatter, config.max_factor_search, config.sign_rule)?;
            let norms: Vec<f64> = residual_sq_norms(panel, &basis.loadings)
                .iter()
                .map(|&s| s.sqrt())
                .collect();
            let tau = interpolated_quantile(&norms, config.threshold_quantile);
            let weights: Vec<f64> = norms
                .iter()
                .map(|&n| huber_weight(n, tau))
                .collect::<Result<_, _>>()?;
            select_num_factors(panel, &weights, config.max_factor_search)?
        }
    };

    let mut basis = pca_step(&init_scatter, m, config.sign_rule)?;
    let mut residual_sq = residual_sq_norms(panel, &basis.loadings);
    let mut objective: f64 = residual_sq.iter().sum();
    let mut trace = vec![objective];

    let mut obs_weights = vec![0.5; t];
    let mut threshold = f64::NAN;
    let mut iterations = 0;
    let mut delta = f64::INFINITY;
    let mut converged = false;

    for _ in 0..config.max_iterations {
        let norms: Vec<f64> = residual_sq.iter().map(|&s| s.sqrt()).collect();
        threshold = interpolated_quantile(&norms, config.threshold_quantile);
        for (w, &n) in obs_weights.iter_mut().zip(&norms) {
            *w = huber_weight(n, threshold)?;
        }
        let scatter = weighted_scatter(panel, &obs_weights)?;
        basis = pca_step(&scatter, m, config.sign_rule)?;
        residual_sq = residual_sq_norms(panel, &basis.loadings);
        let next_objective: f64 = residual_sq.iter().sum();
        trace.push(next_objective);
        delta = (objective - next_objective).abs();
        objective = next_objective;
        iterations += 1;
        if delta < config.tolerance {
            converged = true;
            break;
        }
    }

    let factors = factors_from_loadings(panel, &basis.loadings);
    let fit = FactorFit {
        loadings: basis.loadings,
        factors,
        obs_weights,
        threshold,
        num_factors: m,
        iterations,
        final_delta: delta,
        converged,
        degenerate_spectrum: basis.degenerate,
        objective_trace: trace,
    };
    fit.validate()?;
    Ok(fit)
}

/// Pick the number of factors by the information criterion
/// `log((1/pT) ||Rw - B F'||_F^2) + m g(T, p)` with
/// `g = ((p+T)/pT) log(pT/(p+T))`, over `m = 0..=max_factors`.
///
/// `weights` are per-period robustness weights; the criterion runs on the
/// transformed panel whose rows are scaled by `sqrt(w_t)`. Ties break toward
/// the smaller candidate. Re-running this with updated weights mid-fit is the
/// supported way to refresh the factor count.
pub fn select_num_factors(
    panel: &ReturnPanel,
    weights: &[f64],
    max_factors: usize,
) -> Result<usize, FactorError> {
    let t = panel.num_periods();
    let p = panel.num_assets();
    if weights.len() != t {
        return Err(FactorError::LengthMismatch {
            expected: t,
            actual: weights.len(),
        });
    }
    if max_factors > t.min(p) {
        return Err(FactorError::InvalidConfig(format!(
            "max_factors {max_factors} exceeds min(T, p) = {}",
            t.min(p)
        )));
    }

    // Transformed panel: rows scaled by sqrt(w_t). Its scatter is the
    // weighted scatter, whose spectrum gives every candidate's residual via
    // ||Rw||_F^2 - sum of the m leading eigenvalues of Rw' Rw.
    let mut transformed = panel.values().clone();
    for (i, &w) in weights.iter().enumerate() {
        transformed.row_mut(i).scale_mut(w.sqrt());
    }
    let mut scatter = transformed.transpose() * &transformed;
    linalg::symmetrize(&mut scatter);
    let (eigenvalues, _) = linalg::sorted_symmetric_eigen(&scatter)?;

    let total: f64 = transformed.norm_squared();
    let pt = (p * t) as f64;
    let penalty = ((p + t) as f64 / pt) * (pt / (p + t) as f64).ln();

    let mut best_m = 0;
    let mut best_ic = f64::INFINITY;
    let mut explained = 0.0;
    for m in 0..=max_factors {
        if m > 0 {
            explained += eigenvalues[m - 1];
        }
        let residual = (total - explained).max(0.0);
        let ic = (residual / pt).ln() + m as f64 * penalty;
        if ic < best_ic {
            best_ic = ic;
            best_m = m;
        }
    }
    Ok(best_m)
}

/// Residual matrix `T x p` with row `t` equal to `r_t' - F_t' B'`.
pub fn residuals(panel: &ReturnPanel, fit: &FactorFit) -> Result<DMatrix<f64>, FactorError> {
    if fit.loadings.nrows() != panel.num_assets() {
        return Err(FactorError::DimensionMismatch(format!(
            "fit covers {} assets, panel has {}",
            fit.loadings.nrows(),
            panel.num_assets()
        )));
    }
    if fit.factors.nrows() != panel.num_periods() {
        return Err(FactorError::DimensionMismatch(format!(
            "fit covers {} periods, panel has {}",
            fit.factors.nrows(),
            panel.num_periods()
        )));
    }
    Ok(panel.values() - &fit.factors * fit.loadings.transpose())
}
