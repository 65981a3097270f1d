//! Compares the reservation plan of a run with the RU actually consumed,
//! under Poisson and under deterministic arrivals.
//!
//!     cargo run --release --example cost_accounting [K]

use std::path::PathBuf;

use edgepool::config::ExperimentConfig;
use edgepool::experiment::{execute_run, Datasets};
use edgepool::resources::reserve;
use edgepool::sim::ArrivalMode;

fn main() -> edgepool::Result<()> {
    let k: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let base = ExperimentConfig {
        horizon_s: 200,
        test_limit: 500,
        ..ExperimentConfig::default()
    }
    .with_data_dir(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    let data = Datasets::load(&base)?;

    for mode in [ArrivalMode::Poisson, ArrivalMode::Deterministic] {
        let cfg = ExperimentConfig {
            arrivals: mode,
            ..base.clone()
        };
        let run = execute_run(&cfg, &data, k, 1.0, 3)?;
        let plan = reserve(&run.topology, &run.policy, &cfg.cost_model(), &cfg.sim_config(3))?;
        let r = plan.totals();
        let l = &run.ledger;
        println!("{mode:?} arrivals, k={k}, {} s", cfg.horizon_s);
        println!("  category      reserved     consumed");
        println!("  migration   {:>10.2}   {:>10.2}", r.migration_ru, l.migration_ru);
        println!("  processing  {:>10.2}   {:>10.2}", r.processing_ru, l.processing_ru);
        println!("  exchange    {:>10.2}   {:>10.2}", r.exchange_ru, l.exchange_ru);
        println!("  training    {:>10.2}   {:>10.2}", r.training_ru, l.training_ru);
        println!(
            "  overage: communication {:.2}, computing {:.2}",
            l.communication_overage_ru, l.computing_overage_ru
        );
        println!(
            "  total {:.2} RU, {:.3} RU/s\n",
            l.total(),
            run.record.cost.average_ru_per_s
        );
    }
    Ok(())
}
