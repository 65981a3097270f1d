//! Labeled image datasets and the MNIST IDX reader.
//!
//! IDX files are big-endian: a `u32` magic (`0x00000803` for rank-3 image
//! tensors, `0x00000801` for rank-1 label vectors) followed by one `u32` per
//! dimension and the raw unsigned bytes. Paths ending in `.gz` are
//! decompressed transparently.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_DIM: usize = 784;
pub const NUM_CLASSES: usize = 10;

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    dim: usize,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, labels: Vec<u8>, dim: usize) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} feature values for {} labels of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::invalid(format!("label {bad} out of range")));
        }
        Ok(Self { features, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn label_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Copies the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Self {
            features,
            labels,
            dim: self.dim,
        }
    }

    /// The first `n` rows (or all of them when `n` exceeds the length).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            features: self.features[..n * self.dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            dim: self.dim,
        }
    }
}

/// Raw IDX image tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32_be(reader: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf)?;
    Ok(u32::from_be_bytes(buf))
}

pub fn parse_idx_images(mut reader: impl Read) -> std::result::Result<IdxImages, String> {
    let magic = read_u32_be(&mut reader).map_err(|e| format!("reading magic: {e}"))?;
    if magic != IMAGE_MAGIC {
        return Err(format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = read_u32_be(&mut reader).map_err(|e| format!("reading header: {e}"))? as usize;
    }
    let [count, rows, cols] = dims;
    let mut pixels = vec![0u8; count * rows * cols];
    reader
        .read_exact(&mut pixels)
        .map_err(|e| format!("reading {count} images of {rows}x{cols}: {e}"))?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(mut reader: impl Read) -> std::result::Result<Vec<u8>, String> {
    let magic = read_u32_be(&mut reader).map_err(|e| format!("reading magic: {e}"))?;
    if magic != LABEL_MAGIC {
        return Err(format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"));
    }
    let count = read_u32_be(&mut reader).map_err(|e| format!("reading header: {e}"))? as usize;
    let mut labels = vec![0u8; count];
    reader
        .read_exact(&mut labels)
        .map_err(|e| format!("reading {count} labels: {e}"))?;
    Ok(labels)
}

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let file = File::open(path).map_err(|e| Error::Dataset {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let reader = BufReader::new(file);
    if path.extension().is_some_and(|ext| ext == "gz") {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

pub fn load_idx_images(path: &Path) -> Result<IdxImages> {
    parse_idx_images(open(path)?).map_err(|msg| Error::Dataset {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(open(path)?).map_err(|msg| Error::Dataset {
        path: path.to_path_buf(),
        msg,
    })
}

/// Loads an image/label IDX pair, scaling pixels to `[0, 1]` by `/ 255`.
pub fn load_mnist(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let img = load_idx_images(images)?;
    let lab = load_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(Error::Dataset {
            path: labels.to_path_buf(),
            msg: format!("{} labels for {} images", lab.len(), img.count),
        });
    }
    let features = img.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    LabeledDataset::new(features, lab, img.rows * img.cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(magic: u32, n: u32, rows: u32, cols: u32, body: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [magic, n, rows, cols] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(body);
        out
    }

    #[test]
    fn parses_big_endian_header() {
        let bytes = idx_images(IMAGE_MAGIC, 2, 1, 2, &[0, 255, 51, 102]);
        let img = parse_idx_images(&bytes[..]).unwrap();
        assert_eq!((img.count, img.rows, img.cols), (2, 1, 2));
        assert_eq!(img.pixels, vec![0, 255, 51, 102]);
    }

    #[test]
    fn rejects_wrong_magic() {
        let bytes = idx_images(LABEL_MAGIC, 1, 1, 1, &[0]);
        assert!(parse_idx_images(&bytes[..]).unwrap_err().contains("magic"));

        let mut labels = IMAGE_MAGIC.to_be_bytes().to_vec();
        labels.extend_from_slice(&1u32.to_be_bytes());
        labels.push(3);
        assert!(parse_idx_labels(&labels[..]).unwrap_err().contains("magic"));
    }

    #[test]
    fn rejects_truncated_body() {
        let bytes = idx_images(IMAGE_MAGIC, 2, 2, 2, &[1, 2, 3]);
        assert!(parse_idx_images(&bytes[..]).is_err());
    }

    #[test]
    fn load_scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("img.idx");
        let lab_path = dir.path().join("lab.idx");
        std::fs::write(&img_path, idx_images(IMAGE_MAGIC, 1, 1, 3, &[0, 51, 255])).unwrap();
        let mut lab = LABEL_MAGIC.to_be_bytes().to_vec();
        lab.extend_from_slice(&1u32.to_be_bytes());
        lab.push(7);
        std::fs::write(&lab_path, lab).unwrap();

        let ds = load_mnist(&img_path, &lab_path).unwrap();
        assert_eq!(ds.features(), &[0.0, 0.2, 1.0]);
        assert_eq!(ds.labels(), &[7]);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("img.idx");
        let lab_path = dir.path().join("lab.idx");
        std::fs::write(&img_path, idx_images(IMAGE_MAGIC, 2, 1, 1, &[0, 1])).unwrap();
        let mut lab = LABEL_MAGIC.to_be_bytes().to_vec();
        lab.extend_from_slice(&1u32.to_be_bytes());
        lab.push(1);
        std::fs::write(&lab_path, lab).unwrap();
        assert!(load_mnist(&img_path, &lab_path).is_err());
    }
}
