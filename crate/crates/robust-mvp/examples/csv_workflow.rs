//! File-based workflow: write a panel to CSV, estimate on it through the
//! run driver, and read the emitted artifacts back.
//!
//! ```bash
//! cargo run --example csv_workflow
//! ```

use robust_mvp::config::{EstimateConfig, EstimationConfig};
use robust_mvp::driver::run_estimate;
use robust_mvp::factor::{FactorFit, NumFactors};
use robust_mvp::panel::ReturnPanel;
use robust_mvp::sim::{gen_dgp, DgpId, DgpSpec};

fn main() {
    let out = std::env::temp_dir().join("rmvp-csv-workflow");
    std::fs::create_dir_all(&out).expect("temp dir");

    // Write a synthetic panel in the documented CSV layout.
    let sample = gen_dgp(&DgpSpec::new(DgpId::Baseline, 20, 150, 9)).expect("design");
    let panel_path = out.join("panel.csv");
    sample.train.to_csv_path(&panel_path).expect("write panel");
    println!("wrote {}", panel_path.display());

    // Run the estimate driver exactly as the CLI would.
    let config = EstimateConfig {
        panel: panel_path.clone(),
        estimation: EstimationConfig {
            num_factors: NumFactors::AUTO,
            ..EstimationConfig::default()
        },
    };
    let summary = run_estimate(&config, &out).expect("estimate");
    print!("{}", summary.text);
    println!("artifacts: {}", summary.artifacts.join(", "));

    // Read the panel and the factor fit back; both round-trip exactly.
    let back = ReturnPanel::from_csv_path(&panel_path).expect("read panel");
    assert_eq!(back.values(), sample.train.values());
    let fit_json = std::fs::read_to_string(out.join("factor_fit.json")).expect("read fit");
    let fit: FactorFit = serde_json::from_str(&fit_json).expect("parse fit");
    println!(
        "reloaded factor fit: {} factors, {} periods",
        fit.num_factors(),
        fit.obs_weights().len()
    );
}
