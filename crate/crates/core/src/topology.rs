//! Access points, their workload, and the non-iid split of training data.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::rng::{self, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApNode {
    pub id: usize,
    pub position: Point,
    /// Mean arrivals per second. Zero until rates are sampled.
    pub arrival_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub aps: Vec<ApNode>,
    pub area_side: f64,
    pub seed: u64,
}

impl NetworkTopology {
    pub fn len(&self) -> usize {
        self.aps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aps.is_empty()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.aps.iter().map(|ap| ap.arrival_rate).collect()
    }

    pub fn has_rates(&self) -> bool {
        !self.aps.is_empty()
            && self
                .aps
                .iter()
                .all(|ap| ap.arrival_rate.is_finite() && ap.arrival_rate > 0.0)
    }

    /// Builds a topology from explicit `(position, rate)` pairs, ids in order.
    pub fn from_nodes(nodes: &[(Point, f64)], area_side: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("topology needs at least one AP"));
        }
        let aps = nodes
            .iter()
            .enumerate()
            .map(|(id, &(position, arrival_rate))| ApNode {
                id,
                position,
                arrival_rate,
            })
            .collect();
        Ok(Self {
            aps,
            area_side,
            seed: 0,
        })
    }

    /// (mean, population standard deviation) of the per-AP arrival rates.
    pub fn rate_stats(&self) -> (f64, f64) {
        let n = self.aps.len() as f64;
        let mean = self.aps.iter().map(|a| a.arrival_rate).sum::<f64>() / n;
        let var = self.aps.iter().map(|a| (a.arrival_rate - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }
}

/// Places `n_aps` access points uniformly at random on `[0, area_side]²`.
pub fn generate_topology(n_aps: usize, area_side: f64, seed: u64) -> Result<NetworkTopology> {
    if n_aps == 0 {
        return Err(Error::invalid("n_aps must be at least 1"));
    }
    if !(area_side > 0.0 && area_side.is_finite()) {
        return Err(Error::invalid(format!("area_side must be positive, got {area_side}")));
    }
    let mut rng = rng::seeded(seed, stream::POSITIONS);
    let aps = (0..n_aps)
        .map(|id| {
            let x = rng.random::<f64>() * area_side;
            let y = rng.random::<f64>() * area_side;
            ApNode {
                id,
                position: Point { x, y },
                arrival_rate: 0.0,
            }
        })
        .collect();
    Ok(NetworkTopology { aps, area_side, seed })
}

/// Draws every AP's rate independently and uniformly from `(0, lambda_max]`.
///
/// Rates for the same seed scale linearly with `lambda_max`.
pub fn sample_arrival_rates(topology: &NetworkTopology, lambda_max: f64, seed: u64) -> Result<NetworkTopology> {
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::invalid(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let mut rng = rng::seeded(seed, stream::RATES);
    let mut out = topology.clone();
    for ap in &mut out.aps {
        // 1 - u with u in [0, 1) lands in (0, 1].
        ap.arrival_rate = lambda_max * (1.0 - rng.random::<f64>());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataShard {
    pub ap_id: usize,
    pub sample_indices: Vec<usize>,
    pub label_histogram: [usize; NUM_CLASSES],
}

impl DataShard {
    pub fn distinct_labels(&self) -> usize {
        self.label_histogram.iter().filter(|&&c| c > 0).count()
    }
}

/// Label-sharded non-iid split.
///
/// Sample indices are sorted by label (stable), cut into
/// `n_aps * shards_per_ap` equal contiguous shards with the remainder
/// dropped from the tail, and shards are dealt to APs through a seeded
/// permutation.
pub fn partition_noniid(labels: &[u8], n_aps: usize, shards_per_ap: usize, seed: u64) -> Result<Vec<DataShard>> {
    if n_aps == 0 || shards_per_ap == 0 {
        return Err(Error::invalid("n_aps and shards_per_ap must be at least 1"));
    }
    let n_shards = n_aps * shards_per_ap;
    if labels.len() < n_shards {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {n_shards} shards",
            labels.len()
        )));
    }
    let shard_size = labels.len() / n_shards;

    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by_key(|&i| labels[i]);

    let mut shard_ids: Vec<usize> = (0..n_shards).collect();
    shard_ids.shuffle(&mut rng::seeded(seed, stream::PARTITION));

    Ok(shard_ids
        .chunks(shards_per_ap)
        .enumerate()
        .map(|(ap_id, owned)| {
            let mut sample_indices = Vec::with_capacity(owned.len() * shard_size);
            for &s in owned {
                sample_indices.extend_from_slice(&order[s * shard_size..(s + 1) * shard_size]);
            }
            let mut label_histogram = [0; NUM_CLASSES];
            for &i in &sample_indices {
                label_histogram[labels[i] as usize] += 1;
            }
            DataShard {
                ap_id,
                sample_indices,
                label_histogram,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Class sizes of the 60k MNIST training split.
    const MNIST_TRAIN_COUNTS: [usize; 10] = [5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949];

    fn mnist_like_labels() -> Vec<u8> {
        // interleave classes so sorting actually matters
        let mut remaining = MNIST_TRAIN_COUNTS;
        let mut labels = Vec::with_capacity(60_000);
        while labels.len() < 60_000 {
            for (c, r) in remaining.iter_mut().enumerate() {
                if *r > 0 {
                    labels.push(c as u8);
                    *r -= 1;
                }
            }
        }
        labels
    }

    #[test]
    fn topology_in_bounds_and_deterministic() {
        let a = generate_topology(32, 1000.0, 7).unwrap();
        let b = generate_topology(32, 1000.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 32);
        for (i, ap) in a.aps.iter().enumerate() {
            assert_eq!(ap.id, i);
            assert!((0.0..=1000.0).contains(&ap.position.x));
            assert!((0.0..=1000.0).contains(&ap.position.y));
        }
        assert_ne!(a, generate_topology(32, 1000.0, 8).unwrap());
    }

    #[test]
    fn topology_reference_positions() {
        // regression pin for the portable generator
        let t = generate_topology(32, 1000.0, 7).unwrap();
        let first = t.aps[0].position;
        let again = generate_topology(1, 1000.0, 7).unwrap().aps[0].position;
        assert_eq!(first, again);
    }

    #[test]
    fn single_ap_unit_square() {
        let t = generate_topology(1, 1.0, 0).unwrap();
        assert_eq!(t.len(), 1);
        let p = t.aps[0].position;
        assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(generate_topology(0, 1.0, 0).is_err());
        assert!(generate_topology(3, 0.0, 0).is_err());
        let t = generate_topology(3, 1.0, 0).unwrap();
        assert!(sample_arrival_rates(&t, 0.0, 1).is_err());
        assert!(sample_arrival_rates(&t, -1.0, 1).is_err());
    }

    #[test]
    fn rates_in_half_open_interval() {
        let t = generate_topology(32, 1000.0, 7).unwrap();
        for lmax in [1.0, 1e-9] {
            let r = sample_arrival_rates(&t, lmax, 42).unwrap();
            assert!(r.has_rates());
            assert!(r.aps.iter().all(|a| a.arrival_rate > 0.0 && a.arrival_rate <= lmax));
        }
        let fresh = generate_topology(32, 1000.0, 7).unwrap();
        assert!(!fresh.has_rates());
    }

    #[test]
    fn rates_scale_with_lambda_max() {
        let t = generate_topology(8, 10.0, 3).unwrap();
        let one = sample_arrival_rates(&t, 1.0, 3).unwrap();
        let half = sample_arrival_rates(&t, 0.5, 3).unwrap();
        for (a, b) in one.aps.iter().zip(&half.aps) {
            assert_eq!(a.arrival_rate * 0.5, b.arrival_rate);
        }
    }

    #[test]
    fn partition_mnist_sized() {
        let labels = mnist_like_labels();
        let shards = partition_noniid(&labels, 32, 2, 11).unwrap();
        assert_eq!(shards.len(), 32);
        let mut all: Vec<usize> = Vec::new();
        for s in &shards {
            assert_eq!(s.sample_indices.len(), 2 * 937);
            // each contiguous shard of 937 spans at most two classes
            assert!(s.distinct_labels() <= 4, "{:?}", s.label_histogram);
            all.extend(&s.sample_indices);
        }
        assert_eq!(all.len() + 32, labels.len());
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 64 * 937);
    }

    #[test]
    fn partition_many_shards_approaches_uniform() {
        let labels: Vec<u8> = (0..6400).map(|i| (i % 10) as u8).collect();
        let n = 4;
        let shards = partition_noniid(&labels, n, 10 * n * 4, 5).unwrap();
        for s in &shards {
            assert_eq!(s.distinct_labels(), 10);
        }
    }

    #[test]
    fn single_ap_holds_everything() {
        let labels: Vec<u8> = (0..100).map(|i| (i % 10) as u8).collect();
        let shards = partition_noniid(&labels, 1, 2, 0).unwrap();
        let mut idx = shards[0].sample_indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn partition_too_small() {
        assert!(partition_noniid(&[0, 1, 2], 2, 2, 0).is_err());
    }

    #[test]
    fn rate_stats_hand_case() {
        let t = NetworkTopology::from_nodes(&[(Point { x: 0.0, y: 0.0 }, 1.0), (Point { x: 1.0, y: 1.0 }, 3.0)], 1.0)
            .unwrap();
        assert_eq!(t.rate_stats(), (2.0, 1.0));
    }
}
