//! One full simulated training run: sub-pools train locally on migrated
//! data and a cloud server averages the aggregator models.
//!
//!     cargo run --release --example federated_run [K] [LAMBDA_MAX] [SEED]

use std::path::PathBuf;

use edgepool::config::ExperimentConfig;
use edgepool::experiment::{execute_run, Datasets};
use edgepool::sim::TraceEvent;

fn main() -> edgepool::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let lambda_max: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let cfg =
        ExperimentConfig::default().with_data_dir(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let data = Datasets::load(&cfg)?;
    let run = execute_run(&cfg, &data, k, lambda_max, seed)?;

    println!("    t  accuracy  probe_loss");
    for p in run.outcome.curve.iter().step_by(6) {
        println!("{:>5}  {:>8.4}  {:>10.4}", p.t, p.accuracy, p.loss);
    }
    let arrivals: u64 = run
        .outcome
        .trace
        .events
        .iter()
        .map(|e| match e {
            TraceEvent::Arrival { units, .. } => *units,
            _ => 0,
        })
        .sum();
    let steps = run
        .outcome
        .trace
        .events
        .iter()
        .filter(|e| matches!(e, TraceEvent::LocalTrain { .. }))
        .count();
    println!("{arrivals} samples arrived, {steps} local SGD steps");
    println!(
        "final accuracy {:.4}, {:.3} RU/s ({:.2}s wall clock)",
        run.record.final_accuracy, run.record.cost.average_ru_per_s, run.record.wall_clock_s
    );
    Ok(())
}
