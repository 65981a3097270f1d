//! Loads the bundled MNIST subset and prints its shape and label balance.
//!
//!     cargo run --example ingest_mnist [IMAGES LABELS]

use std::path::PathBuf;

use edgepool::dataset::{load_idx_images, load_mnist};

fn main() -> edgepool::Result<()> {
    let data = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist");
    let mut args = std::env::args().skip(1);
    let images = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| data.join("train-images-idx3-ubyte.gz"));
    let labels = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| data.join("train-labels-idx1-ubyte.gz"));

    let raw = load_idx_images(&images)?;
    println!(
        "{}: {} images of {}x{}",
        images.display(),
        raw.count,
        raw.rows,
        raw.cols
    );

    let ds = load_mnist(&images, &labels)?;
    println!("{} samples, {} features, pixel range [0, 1]", ds.len(), ds.dim());
    for (label, n) in ds.label_counts().iter().enumerate() {
        println!("  label {label}: {n}");
    }

    // coarse ASCII rendering of the first digit
    let first = ds.sample(0);
    for r in (0..28).step_by(2) {
        let line: String = (0..28)
            .map(|c| if first[r * 28 + c] > 0.5 { '#' } else { '.' })
            .collect();
        println!("{line}");
    }
    println!("label of the digit above: {}", ds.label(0));
    Ok(())
}
