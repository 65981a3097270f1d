//! Forms sub-pools by k-means over (location, rate) and shows the elected
//! aggregators and the k-means objective trace.
//!
//!     cargo run --example subpools [K] [SEED]

use edgepool::pooling::{features, form_subpools, kmeans, PoolingFeatures};
use edgepool::topology::{generate_topology, sample_arrival_rates};

fn main() -> edgepool::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);

    let topo = sample_arrival_rates(&generate_topology(32, 1000.0, seed)?, 1.0, seed)?;
    let policy = form_subpools(&topo, k, seed)?;
    for pool in 0..policy.k {
        let agg = policy.aggregators[pool];
        let members: Vec<String> = policy
            .members(pool)
            .into_iter()
            .map(|ap| format!("{ap}({:.2})", topo.aps[ap].arrival_rate))
            .collect();
        println!("pool {pool}: aggregator {agg}, members {}", members.join(" "));
    }

    let points: Vec<[f64; 3]> = features(&topo, PoolingFeatures::LocationAndRate)
        .iter()
        .map(|f| f.as_array())
        .collect();
    let km = kmeans(&points, k, seed, 300, 1e-10)?;
    println!("k-means converged after {} iterations", km.iterations);
    for (i, j) in km.objective_history.iter().enumerate() {
        println!("  iter {i}: objective {j:.6}");
    }
    Ok(())
}
