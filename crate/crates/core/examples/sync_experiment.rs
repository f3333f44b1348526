//! Ensemble estimate of the synchronization exponent.
//!
//! Pass `pdmp`, `phase` or `qss` to pick the simulation engine.

use switchsync::cli::sync_experiment;
use switchsync::experiment::ExperimentConfig;
use switchsync::Result;

fn main() -> Result<()> {
    let engine = std::env::args().nth(1).unwrap_or_else(|| "phase".into());
    let overrides = vec![
        format!("engine=\"{engine}\""),
        "n_trials=16".into(),
        "periods=150".into(),
        "epsilon=0.01".into(),
    ];
    let config = ExperimentConfig::from_json_with_overrides(None, &overrides)?;
    let (report, outcome, period) = sync_experiment(&config)?;

    println!(
        "engine {engine}, period {period:.4}, {} trials",
        outcome.trials.len()
    );
    println!("lambda exact     {:+.4}", report.lambda_exact);
    println!("lambda qss       {:+.4}", report.lambda_qss);
    if let (Some(est), Some(se)) = (report.lambda_empirical, report.std_error) {
        println!("lambda empirical {est:+.4} +/- {se:.4}");
    }
    Ok(())
}
