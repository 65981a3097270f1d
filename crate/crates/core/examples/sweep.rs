//! Runs the sweep described by a TOML config and writes the summary CSV,
//! per-run JSON records and the figure series.
//!
//!     cargo run --release --example sweep -- CONFIG.toml OUT_DIR

use std::path::PathBuf;

use edgepool::config::ExperimentConfig;
use edgepool::experiment::{plot_data, run_sweep, write_plot_data, write_sweep, Datasets};

fn main() -> edgepool::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig {
            k: vec![1, 32],
            seeds: vec![1],
            horizon_s: 100,
            ..ExperimentConfig::default()
        }
        .with_data_dir(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")),
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| cfg.output_dir.clone());

    let data = Datasets::load(&cfg)?;
    let result = run_sweep(&cfg, &data)?;
    write_sweep(&out, &result)?;
    write_plot_data(&out.join("plot-data"), &plot_data(&result.rows, &result.records))?;
    for f in &result.failures {
        eprintln!(
            "failed: k={} lambda_max={} seed={}: {}",
            f.k, f.lambda_max, f.seed, f.error
        );
    }
    println!("{} runs -> {}", result.rows.len(), out.display());
    Ok(())
}
