//! Generates the 32-AP edge network, draws arrival rates and deals
//! non-iid label shards to the APs.
//!
//!     cargo run --example topology [SEED] [LAMBDA_MAX]

use std::path::PathBuf;

use edgepool::dataset::load_idx_labels;
use edgepool::topology::{generate_topology, partition_noniid, sample_arrival_rates};

fn main() -> edgepool::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(42);
    let lambda_max: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1.0);

    let topo = generate_topology(32, 1000.0, seed)?;
    let topo = sample_arrival_rates(&topo, lambda_max, seed)?;
    let labels = load_idx_labels(
        &PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist/train-labels-idx1-ubyte.gz"),
    )?;
    let shards = partition_noniid(&labels, topo.len(), 2, seed)?;

    println!("ap      x       y     rate  shard  labels");
    for (ap, shard) in topo.aps.iter().zip(&shards) {
        let labels: Vec<String> = shard
            .label_histogram
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(l, n)| format!("{l}:{n}"))
            .collect();
        println!(
            "{:>2} {:>7.1} {:>7.1} {:>8.5} {:>6}  {}",
            ap.id,
            ap.position.x,
            ap.position.y,
            ap.arrival_rate,
            shard.sample_indices.len(),
            labels.join(" ")
        );
    }
    let (mean, std) = topo.rate_stats();
    println!(
        "rate mean {mean:.4}, std {std:.4}, total {:.3} samples/s",
        topo.rates().iter().sum::<f64>()
    );
    Ok(())
}
