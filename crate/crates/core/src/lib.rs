//! Slicing-based AI-service provisioning on a simulated edge network.
//!
//! Access points are grouped into sub-pools by k-means over location and
//! data-arrival rate. Each sub-pool migrates its raw samples to one
//! aggregator AP, which trains a local MLP on MNIST; a cloud server runs
//! FedAvg over the `k` aggregators. The resources spent on migration,
//! processing, model exchange and training are tracked in resource units
//! (RU), and Gaussian-process surrogates trained on a sweep pick the
//! cheapest `k` that meets an accuracy requirement.
//!
//! ```no_run
//! use edgepool::{config::ExperimentConfig, experiment::{run_single, Datasets}};
//!
//! let cfg = ExperimentConfig::default();
//! let data = Datasets::load(&cfg)?;
//! let record = run_single(&cfg, &data, 4, 1.0, 7)?;
//! println!("accuracy {:.3}, {:.2} RU/s", record.final_accuracy, record.cost.average_ru_per_s);
//! # Ok::<(), edgepool::Error>(())
//! ```

pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod mlp;
pub mod pooling;
pub mod resources;
pub mod rng;
pub mod sim;
pub mod surrogate;
pub mod topology;

pub use error::{Error, Result};
