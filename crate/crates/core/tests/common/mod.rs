#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use edgepool::config::ExperimentConfig;
use edgepool::experiment::Datasets;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

pub fn config() -> ExperimentConfig {
    ExperimentConfig::default().with_data_dir(&data_dir())
}

pub fn datasets() -> &'static Datasets {
    static DATA: OnceLock<Datasets> = OnceLock::new();
    DATA.get_or_init(|| Datasets::load(&config()).expect("bundled MNIST subset loads"))
}
