//! Threshold the residual covariance at several constants and pick one by
//! cross-validation.
//!
//! ```bash
//! cargo run --example residual_thresholding
//! ```

use robust_mvp::factor::{fit_robust_factors, residuals, RobustPcaConfig};
use robust_mvp::sim::{gen_dgp, DgpId, DgpSpec};
use robust_mvp::threshold::{
    adaptive_threshold, cross_validate_constant, entry_variances, sample_residual_cov,
    ThresholdConfig, ThresholdConstant, ThresholdRule,
};

fn main() {
    let spec = DgpSpec::new(DgpId::Baseline, 30, 120, 11);
    let sample = gen_dgp(&spec).expect("valid design");
    let fit =
        fit_robust_factors(&sample.train, &RobustPcaConfig::with_num_factors(2)).expect("fit");
    let resid = residuals(&sample.train, &fit).expect("residuals");

    let s = sample_residual_cov(&resid).expect("sample covariance");
    let v = entry_variances(&resid, &s).expect("entry variances");

    println!("sparsity of the thresholded residual covariance by constant:");
    for constant in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let cov =
            adaptive_threshold(&s, &v, constant, 120, ThresholdRule::Soft).expect("threshold");
        println!(
            "  c = {constant:<5} zero off-diagonals: {:.1}%",
            100.0 * cov.sparsity()
        );
    }

    let config = ThresholdConfig {
        constant: ThresholdConstant::CV,
        cv_seed: 17,
        ..ThresholdConfig::default()
    };
    let (selected, diagnostics) =
        cross_validate_constant(&resid, &config).expect("cross-validation");
    println!("\ncross-validation over {} folds:", config.cv_folds);
    for i in 0..diagnostics.grid.len() {
        println!(
            "  c = {:<4} mean loss {:.6e} {}",
            diagnostics.grid[i],
            diagnostics.mean_loss[i],
            if diagnostics.feasible[i] {
                ""
            } else {
                "(not positive definite)"
            }
        );
    }
    println!("selected constant: {selected}");
}
