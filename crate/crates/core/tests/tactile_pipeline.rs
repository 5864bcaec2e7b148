//! End-to-end touch sensing pipeline: generate the press-cycle corpus,
//! train the estimator, and check held-out accuracy.

use softquad::config::TactileConfig;
use softquad::tactile::{estimate_grf, generate_calibration_data, train_force_estimator};

#[test]
fn default_pipeline_beats_accuracy_bar_and_linear_baseline() {
    let cfg = TactileConfig::default();
    let data = generate_calibration_data(&cfg, 2024);
    assert!(data.n_cycles >= 420);
    let (est, report) = train_force_estimator(&data, cfg.epochs, 7).unwrap();

    assert!(
        report.rmse < 0.05 * report.force_range,
        "rmse {:.4} N vs 5% of range {:.4} N",
        report.rmse,
        0.05 * report.force_range
    );
    assert!(
        report.rmse < report.linear_rmse,
        "rmse {:.4} not better than linear baseline {:.4}",
        report.rmse,
        report.linear_rmse
    );
    assert!(report.r_squared > 0.9, "r² {}", report.r_squared);

    // baseline readings decode to near-zero force
    let b0 = cfg.rest_field;
    let f0 = estimate_grf(&est, &[b0, b0, b0]);
    assert!(f0 < 2.0 * report.rmse.max(0.1), "baseline decodes to {f0} N");
}
