//! Runs a small sweep, fits the accuracy and cost surrogates and ranks
//! the number of sub-pools for an accuracy requirement.
//!
//!     cargo run --release --example surrogate_selection [REQUIRED_ACCURACY]

use std::path::PathBuf;

use edgepool::config::ExperimentConfig;
use edgepool::experiment::{fit_and_select, run_sweep, Datasets};

fn main() -> edgepool::Result<()> {
    let required: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.7);
    let cfg = ExperimentConfig {
        k: vec![1, 4, 16, 32],
        seeds: vec![1, 2],
        horizon_s: 200,
        test_limit: 1000,
        ..ExperimentConfig::default()
    }
    .with_data_dir(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let data = Datasets::load(&cfg)?;
    let sweep = run_sweep(&cfg, &data)?;
    for r in &sweep.rows {
        println!(
            "k={:>2} seed={} accuracy={:.4} avg_ru_per_s={:.3}",
            r.k, r.seed, r.final_accuracy, r.total_ru_avg
        );
    }
    let report = fit_and_select(&cfg, &sweep.rows, required, None)?;
    println!("\n{report}");
    Ok(())
}
