//! Entry-adaptive thresholding of the residual covariance.
//!
//! The residual sample covariance is shrunk off the diagonal: entry `(i, j)`
//! survives only beyond the threshold `c * rate(p, T) * sqrt(v_ij)` where
//! `v_ij` is the sample variance of the per-period products `e_it e_jt` and
//! `rate(p, T) = 1/sqrt(p) + sqrt(log(p)/T)`. The constant `c` is either
//! fixed or picked by repeated random-split cross-validation constrained to
//! the positive-definite region.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError};

/// Minimum smallest-eigenvalue accepted as "positive definite" during
/// cross-validation. The assembled covariance is inverted later, so
/// feasibility uses a hard absolute floor.
pub const PD_FLOOR: f64 = 1e-10;

/// Errors from residual covariance estimation.
#[derive(Debug, Error)]
pub enum ThresholdError {
    /// The thresholding constant must be nonnegative and finite.
    #[error("invalid thresholding constant {0}")]
    InvalidConstant(f64),

    /// Operand shapes disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Not enough periods.
    #[error("need at least {required} periods, got {actual}")]
    InsufficientPeriods {
        /// Minimum required.
        required: usize,
        /// Provided.
        actual: usize,
    },

    /// Bad cross-validation configuration.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// No grid value kept the thresholded matrix positive definite on every
    /// fold. Carries the full loss curve for diagnosis.
    #[error("no grid value yields a positive definite estimate on all folds")]
    NoFeasibleConstant(Box<CvDiagnostics>),

    /// Eigen/Cholesky failure.
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    /// A deserialized matrix violates an invariant.
    #[error("invalid residual covariance: {0}")]
    InvalidMatrix(String),
}

/// Shrinkage rule applied to off-diagonal entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `sign(z) * max(|z| - t, 0)`.
    #[default]
    Soft,
    /// `z * 1(|z| >= t)`.
    Hard,
}

/// Dimensional rate used inside the entry thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateForm {
    /// `1/sqrt(p) + sqrt(log(p)/T)`.
    #[default]
    Simple,
}

/// Choice of the thresholding constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum ThresholdConstant {
    /// Select by cross-validation (the literal string `"cv"` in configs).
    CrossValidate(CvTag),
    /// Use this fixed value.
    Fixed(f64),
}

/// Marker so `"cv"` round-trips through config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvTag {
    /// The literal string `cv`.
    Cv,
}

impl ThresholdConstant {
    /// Convenience constructor for the cross-validated choice.
    pub const CV: ThresholdConstant = ThresholdConstant::CrossValidate(CvTag::Cv);
}

/// Configuration of the thresholding estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    /// Thresholding constant: fixed value or `"cv"`.
    pub constant: ThresholdConstant,
    /// Shrinkage rule.
    pub rule: ThresholdRule,
    /// Rate form used in the entry thresholds.
    pub rate: RateForm,
    /// Number of random splits for cross-validation.
    pub cv_folds: usize,
    /// Ascending candidate grid for the constant.
    pub cv_grid: Vec<f64>,
    /// Seed of the fold-assignment stream.
    pub cv_seed: u64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            constant: ThresholdConstant::Fixed(0.5),
            rule: ThresholdRule::Soft,
            rate: RateForm::Simple,
            cv_folds: 5,
            cv_grid: (1..=20).map(|i| i as f64 / 10.0).collect(),
            cv_seed: 0,
        }
    }
}

impl ThresholdConfig {
    /// Validate grid and fold counts.
    pub fn validate(&self) -> Result<(), ThresholdError> {
        if self.cv_folds < 2 {
            return Err(ThresholdError::InvalidConfig(format!(
                "cv_folds {} must be at least 2",
                self.cv_folds
            )));
        }
        if self.cv_grid.is_empty() {
            return Err(ThresholdError::InvalidConfig("cv_grid is empty".into()));
        }
        for w in self.cv_grid.windows(2) {
            if w[0] >= w[1] {
                return Err(ThresholdError::InvalidConfig(format!(
                    "cv_grid not strictly ascending at {} >= {}",
                    w[0], w[1]
                )));
            }
        }
        if self.cv_grid.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(ThresholdError::InvalidConfig(
                "cv_grid values must be finite and nonnegative".into(),
            ));
        }
        if let ThresholdConstant::Fixed(c) = self.constant {
            if c < 0.0 || !c.is_finite() {
                return Err(ThresholdError::InvalidConstant(c));
            }
        }
        Ok(())
    }
}

/// A thresholded residual covariance with its selection metadata.
///
/// Exactly symmetric with strictly positive diagonal; every surviving
/// off-diagonal entry exceeded its entry threshold under the recorded rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseResidualCovRepr", into = "SparseResidualCovRepr")]
pub struct SparseResidualCov {
    matrix: DMatrix<f64>,
    constant: f64,
    rule: ThresholdRule,
    sparsity: f64,
}

impl SparseResidualCov {
    /// The `p x p` thresholded matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The thresholding constant used.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// The shrinkage rule used.
    pub fn rule(&self) -> ThresholdRule {
        self.rule
    }

    /// Fraction of off-diagonal entries set to zero.
    pub fn sparsity(&self) -> f64 {
        self.sparsity
    }

    /// Number of assets `p`.
    pub fn num_assets(&self) -> usize {
        self.matrix.nrows()
    }

    fn validate(&self) -> Result<(), ThresholdError> {
        let p = self.matrix.nrows();
        if self.matrix.ncols() != p {
            return Err(ThresholdError::InvalidMatrix(format!(
                "matrix is {}x{}",
                p,
                self.matrix.ncols()
            )));
        }
        for i in 0..p {
            let diagonal = self.matrix[(i, i)];
            if diagonal <= 0.0 || diagonal.is_nan() {
                return Err(ThresholdError::InvalidMatrix(format!(
                    "diagonal entry {i} is {}",
                    self.matrix[(i, i)]
                )));
            }
            for j in (i + 1)..p {
                if (self.matrix[(i, j)] - self.matrix[(j, i)]).abs() > 1e-12 {
                    return Err(ThresholdError::InvalidMatrix(format!(
                        "asymmetry at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SparseResidualCovRepr {
    constant: f64,
    rule: ThresholdRule,
    sparsity: f64,
    /// Row-major `p x p`.
    matrix: Vec<Vec<f64>>,
}

impl TryFrom<SparseResidualCovRepr> for SparseResidualCov {
    type Error = ThresholdError;

    fn try_from(repr: SparseResidualCovRepr) -> Result<Self, Self::Error> {
        let nrows = repr.matrix.len();
        let ncols = repr.matrix.first().map_or(0, Vec::len);
        if repr.matrix.iter().any(|r| r.len() != ncols) {
            return Err(ThresholdError::InvalidMatrix("ragged rows".into()));
        }
        let out = SparseResidualCov {
            matrix: DMatrix::from_row_iterator(nrows, ncols, repr.matrix.iter().flatten().copied()),
            constant: repr.constant,
            rule: repr.rule,
            sparsity: repr.sparsity,
        };
        out.validate()?;
        Ok(out)
    }
}

impl From<SparseResidualCov> for SparseResidualCovRepr {
    fn from(cov: SparseResidualCov) -> Self {
        SparseResidualCovRepr {
            constant: cov.constant,
            rule: cov.rule,
            sparsity: cov.sparsity,
            matrix: crate::factor::matrix_to_rows(&cov.matrix),
        }
    }
}

/// Second-moment covariance of a `T x p` residual matrix:
/// `S_ij = (1/T) sum_t e_it e_jt`, with no mean subtraction (residuals are
/// mean-zero by construction).
pub fn sample_residual_cov(residuals: &DMatrix<f64>) -> Result<DMatrix<f64>, ThresholdError> {
    let t = residuals.nrows();
    if t < 2 {
        return Err(ThresholdError::InsufficientPeriods {
            required: 2,
            actual: t,
        });
    }
    let mut s = residuals.transpose() * residuals / t as f64;
    linalg::symmetrize(&mut s);
    Ok(s)
}

/// Sample variance of the per-period entry products:
/// `v_ij = (1/T) sum_t (e_it e_jt - S_ij)^2`.
///
/// `sample_cov` must be the output of [`sample_residual_cov`] on the same
/// residual matrix.
pub fn entry_variances(
    residuals: &DMatrix<f64>,
    sample_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>, ThresholdError> {
    let (t, p) = residuals.shape();
    if sample_cov.shape() != (p, p) {
        return Err(ThresholdError::DimensionMismatch(format!(
            "sample covariance is {:?}, expected ({p}, {p})",
            sample_cov.shape()
        )));
    }
    let mut v = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let mut acc = 0.0;
            for k in 0..t {
                let d = residuals[(k, i)] * residuals[(k, j)] - sample_cov[(i, j)];
                acc += d * d;
            }
            let val = acc / t as f64;
            v[(i, j)] = val;
            v[(j, i)] = val;
        }
    }
    Ok(v)
}

/// Soft shrinkage: `sign(z) * max(|z| - threshold, 0)`.
///
/// The shrinkage bound `|chi - z| <= threshold` is kept exact in `f64`: one
/// rounding in the subtraction can overshoot the budget by a fraction of an
/// ulp, in which case the result is stepped back toward `z`.
pub fn soft_threshold(z: f64, threshold: f64) -> f64 {
    if z.abs() <= threshold {
        return 0.0;
    }
    let mut chi = z - z.signum() * threshold;
    while (chi - z).abs() > threshold {
        chi = if z > 0.0 {
            chi.next_up()
        } else {
            chi.next_down()
        };
    }
    chi
}

/// Hard shrinkage: `z` if `|z| >= threshold`, else 0.
pub fn hard_threshold(z: f64, threshold: f64) -> f64 {
    if z.abs() >= threshold {
        z
    } else {
        0.0
    }
}

/// Dimensional rate `1/sqrt(p) + sqrt(log(p)/T)` (natural log).
pub fn threshold_rate(num_assets: usize, num_periods: usize) -> f64 {
    let p = num_assets as f64;
    let t = num_periods as f64;
    1.0 / p.sqrt() + ((p.ln()) / t).sqrt()
}

/// Apply entry-adaptive thresholding to a residual sample covariance.
///
/// The diagonal is kept as-is; off-diagonal entry `(i, j)` is shrunk by the
/// rule at threshold `constant * rate(p, T) * sqrt(v_ij)`. A zero constant
/// leaves the matrix unchanged. Output is exactly symmetric.
pub fn adaptive_threshold(
    sample_cov: &DMatrix<f64>,
    variances: &DMatrix<f64>,
    constant: f64,
    num_periods: usize,
    rule: ThresholdRule,
) -> Result<SparseResidualCov, ThresholdError> {
    if constant < 0.0 || !constant.is_finite() {
        return Err(ThresholdError::InvalidConstant(constant));
    }
    let p = sample_cov.nrows();
    if sample_cov.ncols() != p || variances.shape() != (p, p) {
        return Err(ThresholdError::DimensionMismatch(format!(
            "sample covariance {:?} vs variances {:?}",
            sample_cov.shape(),
            variances.shape()
        )));
    }
    let rate = threshold_rate(p, num_periods);
    let mut out = DMatrix::zeros(p, p);
    let mut zeros = 0usize;
    for i in 0..p {
        out[(i, i)] = sample_cov[(i, i)];
        for j in (i + 1)..p {
            let threshold = constant * rate * variances[(i, j)].max(0.0).sqrt();
            let shrunk = match rule {
                ThresholdRule::Soft => soft_threshold(sample_cov[(i, j)], threshold),
                ThresholdRule::Hard => hard_threshold(sample_cov[(i, j)], threshold),
            };
            out[(i, j)] = shrunk;
            out[(j, i)] = shrunk;
            if shrunk == 0.0 {
                zeros += 2;
            }
        }
    }
    let off_diag = p * p - p;
    let cov = SparseResidualCov {
        matrix: out,
        constant,
        rule,
        sparsity: if off_diag == 0 {
            0.0
        } else {
            zeros as f64 / off_diag as f64
        },
    };
    cov.validate()?;
    Ok(cov)
}

/// Cross-validation diagnostics: the full loss curve over the grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvDiagnostics {
    /// Candidate constants (the configured grid).
    pub grid: Vec<f64>,
    /// Mean validation loss per candidate.
    pub mean_loss: Vec<f64>,
    /// Whether the candidate stayed positive definite on all folds.
    pub feasible: Vec<bool>,
    /// Smallest feasible grid value, when any.
    pub feasible_floor: Option<f64>,
    /// The selected constant.
    pub selected: f64,
}

impl CvDiagnostics {
    /// Render the curve as CSV (`constant,mean_loss,feasible`).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("constant,mean_loss,feasible\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.grid[i], self.mean_loss[i], self.feasible[i]
            ));
        }
        out
    }
}

/// Select the thresholding constant by `cv_folds` random train/validation
/// splits.
///
/// Each split trains on `floor(2T/3)` randomly chosen periods and validates
/// on the rest, scoring `|| thresholded(train) - sample(validation) ||_F^2`.
/// Only candidates at least as large as the smallest grid value that stays
/// positive definite (smallest eigenvalue above `1e-10`) on every fold are
/// eligible; among those the smallest mean loss wins, ties toward the
/// smaller constant.
///
/// Fold assignment is part of the reproducibility contract: fold `j` is
/// drawn by shuffling `0..T` (Fisher-Yates via `SliceRandom::shuffle`) on a
/// `ChaCha20Rng` seeded with `cv_seed`, consuming one shuffle per fold, and
/// taking the first `floor(2T/3)` positions as the training subset.
pub fn cross_validate_constant(
    residuals: &DMatrix<f64>,
    config: &ThresholdConfig,
) -> Result<(f64, CvDiagnostics), ThresholdError> {
    config.validate()?;
    let (t, _p) = residuals.shape();
    let train_len = 2 * t / 3;
    if train_len < 2 || t - train_len < 2 {
        return Err(ThresholdError::InsufficientPeriods {
            required: 6,
            actual: t,
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(config.cv_seed);
    let grid = &config.cv_grid;
    let mut loss_sums = vec![0.0f64; grid.len()];
    let mut feasible = vec![true; grid.len()];

    for _fold in 0..config.cv_folds {
        let mut order: Vec<usize> = (0..t).collect();
        order.shuffle(&mut rng);
        let (train_idx, valid_idx) = order.split_at(train_len);

        let train = select_rows(residuals, train_idx);
        let valid = select_rows(residuals, valid_idx);
        let s_train = sample_residual_cov(&train)?;
        let v_train = entry_variances(&train, &s_train)?;
        let s_valid = sample_residual_cov(&valid)?;

        for (g, &c) in grid.iter().enumerate() {
            let estimate = adaptive_threshold(&s_train, &v_train, c, train_len, config.rule)?;
            if linalg::min_eigenvalue(estimate.matrix())? <= PD_FLOOR {
                feasible[g] = false;
            }
            let diff = estimate.matrix() - &s_valid;
            loss_sums[g] += diff.norm_squared();
        }
    }

    let k = config.cv_folds as f64;
    let mean_loss: Vec<f64> = loss_sums.iter().map(|&s| s / k).collect();

    let floor_idx = feasible.iter().position(|&f| f);
    let Some(floor_idx) = floor_idx else {
        return Err(ThresholdError::NoFeasibleConstant(Box::new(
            CvDiagnostics {
                grid: grid.clone(),
                mean_loss,
                feasible,
                feasible_floor: None,
                selected: f64::NAN,
            },
        )));
    };
    // Restrict to candidates at or above the feasibility floor; strict
    // comparison keeps ties on the smaller constant.
    let mut best = floor_idx;
    for g in floor_idx..grid.len() {
        if mean_loss[g] < mean_loss[best] {
            best = g;
        }
    }

    let diagnostics = CvDiagnostics {
        grid: grid.clone(),
        mean_loss,
        feasible: feasible.clone(),
        feasible_floor: Some(grid[floor_idx]),
        selected: grid[best],
    };
    Ok((grid[best], diagnostics))
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let p = m.ncols();
    let mut out = DMatrix::zeros(rows.len(), p);
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).copy_from(&m.row(src));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sample_cov_hand_example() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let s = sample_residual_cov(&e).unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]));
    }

    #[test]
    fn sample_cov_zero_residuals() {
        let e = DMatrix::zeros(4, 3);
        let s = sample_residual_cov(&e).unwrap();
        assert_eq!(s, DMatrix::zeros(3, 3));
    }

    #[test]
    fn sample_cov_is_psd() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let e = DMatrix::from_fn(10, 4, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let s = sample_residual_cov(&e).unwrap();
        let min = linalg::min_eigenvalue(&s).unwrap();
        assert!(min >= -1e-12, "min eigenvalue {min}");
        assert_eq!(s, s.transpose());
    }

    #[test]
    fn sample_cov_needs_two_periods() {
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(
            sample_residual_cov(&e),
            Err(ThresholdError::InsufficientPeriods { .. })
        ));
    }

    #[test]
    fn entry_variances_hand_example() {
        // Products e_1 e_2 per period: 1 and -1; S_12 = 0; variance = 1.
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 1.0]);
        let s = sample_residual_cov(&e).unwrap();
        let v = entry_variances(&e, &s).unwrap();
        assert!((v[(0, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn entry_variances_constant_products_are_zero() {
        // Identical rows: the product sequence is constant, so v_ij = 0.
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let s = sample_residual_cov(&e).unwrap();
        let v = entry_variances(&e, &s).unwrap();
        assert!(v[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn entry_variances_match_naive_double_loop() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let e = DMatrix::from_fn(5, 3, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let s = sample_residual_cov(&e).unwrap();
        let v = entry_variances(&e, &s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for t in 0..5 {
                    acc += (e[(t, i)] * e[(t, j)] - s[(i, j)]).powi(2);
                }
                assert!((v[(i, j)] - acc / 5.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn threshold_limits() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let e = DMatrix::from_fn(20, 4, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let s = sample_residual_cov(&e).unwrap();
        let v = entry_variances(&e, &s).unwrap();

        // Huge constant: diagonal only.
        let diag = adaptive_threshold(&s, &v, 1e12, 20, ThresholdRule::Soft).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(diag.matrix()[(i, j)], 0.0);
                } else {
                    assert_eq!(diag.matrix()[(i, i)], s[(i, i)]);
                }
            }
        }
        assert_eq!(diag.sparsity(), 1.0);

        // Zero constant: identity map.
        let keep = adaptive_threshold(&s, &v, 0.0, 20, ThresholdRule::Soft).unwrap();
        assert_eq!(keep.matrix(), &s);
    }

    #[test]
    fn threshold_rules_hand_value() {
        // Force the entry threshold to exactly 0.2: rate * sqrt(v) = 0.4
        // with constant 0.5.
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let rate = threshold_rate(2, 50);
        let v_entry = (0.4f64 / rate).powi(2);
        let mut v = DMatrix::zeros(2, 2);
        v[(0, 1)] = v_entry;
        v[(1, 0)] = v_entry;
        let soft = adaptive_threshold(&s, &v, 0.5, 50, ThresholdRule::Soft).unwrap();
        assert!((soft.matrix()[(0, 1)] - 0.3).abs() < 1e-12);
        let hard = adaptive_threshold(&s, &v, 0.5, 50, ThresholdRule::Hard).unwrap();
        assert_eq!(hard.matrix()[(0, 1)], 0.5);
    }

    #[test]
    fn negative_constant_rejected() {
        let s = DMatrix::identity(2, 2);
        let v = DMatrix::zeros(2, 2);
        assert!(matches!(
            adaptive_threshold(&s, &v, -0.1, 10, ThresholdRule::Soft),
            Err(ThresholdError::InvalidConstant(_))
        ));
    }

    #[test]
    fn monotone_sparsity_and_hard_dominates_soft() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let e = DMatrix::from_fn(30, 6, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let s = sample_residual_cov(&e).unwrap();
        let v = entry_variances(&e, &s).unwrap();
        let mut prev_zeros = 0usize;
        for step in 0..8 {
            let c = step as f64 * 0.35;
            let soft = adaptive_threshold(&s, &v, c, 30, ThresholdRule::Soft).unwrap();
            let hard = adaptive_threshold(&s, &v, c, 30, ThresholdRule::Hard).unwrap();
            let zeros = soft.matrix().iter().filter(|&&x| x == 0.0).count();
            assert!(zeros >= prev_zeros, "sparsity decreased at c = {c}");
            prev_zeros = zeros;
            for i in 0..6 {
                for j in 0..6 {
                    if i != j {
                        assert!(
                            hard.matrix()[(i, j)].abs() >= soft.matrix()[(i, j)].abs(),
                            "|hard| < |soft| at ({i}, {j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn symmetry_is_exact() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let e = DMatrix::from_fn(25, 5, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let s = sample_residual_cov(&e).unwrap();
        let v = entry_variances(&e, &s).unwrap();
        let cov = adaptive_threshold(&s, &v, 0.5, 25, ThresholdRule::Soft).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(cov.matrix()[(i, j)], cov.matrix()[(j, i)]);
            }
        }
    }

    #[test]
    fn cv_is_deterministic_and_diagnosed() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let e = DMatrix::from_fn(90, 10, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let cfg = ThresholdConfig {
            constant: ThresholdConstant::CV,
            cv_seed: 99,
            ..ThresholdConfig::default()
        };
        let (c1, d1) = cross_validate_constant(&e, &cfg).unwrap();
        let (c2, d2) = cross_validate_constant(&e, &cfg).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(d1.mean_loss, d2.mean_loss);
        assert_eq!(d1.grid.len(), d1.mean_loss.len());
        assert!(d1.selected >= d1.feasible_floor.unwrap());
    }

    #[test]
    fn cv_singleton_grid_returns_it() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let e = DMatrix::from_fn(60, 6, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let cfg = ThresholdConfig {
            constant: ThresholdConstant::CV,
            cv_grid: vec![0.8],
            ..ThresholdConfig::default()
        };
        let (c, _) = cross_validate_constant(&e, &cfg).unwrap();
        assert_eq!(c, 0.8);
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let e = DMatrix::from_fn(20, 4, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let s = sample_residual_cov(&e).unwrap();
        let v = entry_variances(&e, &s).unwrap();
        let cov = adaptive_threshold(&s, &v, 0.5, 20, ThresholdRule::Soft).unwrap();
        let json = serde_json::to_string(&cov).unwrap();
        let back: SparseResidualCov = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cov);

        let mut broken: serde_json::Value = serde_json::to_value(&cov).unwrap();
        broken["matrix"][0][1] = serde_json::json!(9.0); // breaks symmetry
        assert!(serde_json::from_value::<SparseResidualCov>(broken).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Shrinkage contract: chi(z) = 0 inside the threshold and
            // |chi(z) - z| <= threshold everywhere, both rules, exactly.
            #[test]
            fn shrinkage_contract(z in -10.0f64..10.0, t in 0.0f64..5.0) {
                for rule in [ThresholdRule::Soft, ThresholdRule::Hard] {
                    let chi = match rule {
                        ThresholdRule::Soft => soft_threshold(z, t),
                        ThresholdRule::Hard => hard_threshold(z, t),
                    };
                    if z.abs() <= t && !(z.abs() == t && rule == ThresholdRule::Hard) {
                        prop_assert_eq!(chi, 0.0);
                    }
                    prop_assert!((chi - z).abs() <= t);
                }
            }
        }
    }
}
