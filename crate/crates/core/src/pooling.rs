//! Secondary resource pool formation.
//!
//! VAPs are clustered into sub-pools with k-means over min-max normalized
//! `(x, y, rate)` features. Each sub-pool elects as aggregator the member with
//! the highest arrival rate; that AP hosts the sub-pool's training and
//! receives the data migrated by its peers.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::topology::NetworkTopology;

/// Output of [`kmeans`].
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<const D: usize> {
    pub assignment: Vec<usize>,
    pub centroids: Vec<[f64; D]>,
    /// Within-cluster sum of squares after every centroid update, plus the
    /// final reassignment.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl<const D: usize> KMeans<D> {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

pub fn sq_dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn wcss<const D: usize>(points: &[[f64; D]], assignment: &[usize], centroids: &[[f64; D]]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest<const D: usize>(p: &[f64; D], centroids: &[[f64; D]]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn plus_plus_init<const D: usize>(points: &[[f64; D]], k: usize, rng: &mut rng::Rng) -> Vec<[f64; D]> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();

    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.push(points[pick]);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &points[pick]));
        }
    }
    centroids
}

/// Moves the point farthest from its centroid in the largest cluster into
/// each empty cluster, which then sits on that point.
fn repair_empty<const D: usize>(points: &[[f64; D]], assignment: &mut [usize], centroids: &mut [[f64; D]]) {
    let k = centroids.len();
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignment.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap();
        let victim = (0..points.len())
            .filter(|&i| assignment[i] == largest)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centroids[largest])
                    .total_cmp(&sq_dist(&points[b], &centroids[largest]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        assignment[victim] = empty;
        centroids[empty] = points[victim];
    }
}

fn means<const D: usize>(points: &[[f64; D]], assignment: &[usize], k: usize) -> Vec<[f64; D]> {
    let mut sums = vec![[0.0; D]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        for (s, x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
        counts[c] += 1;
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= n as f64;
        }
    }
    sums
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops once no centroid moves by `tol` or more (Euclidean) or after
/// `max_iter` updates. Final assignments are to the nearest final centroid.
pub fn kmeans<const D: usize>(
    points: &[[f64; D]],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeans<D>> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!("k = {k} with {} points", points.len())));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite point coordinate"));
    }
    let mut rng = rng::seeded(seed, stream::KMEANS);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignment = vec![0; points.len()];
    let mut objective_history = Vec::new();
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids);
        }
        repair_empty(points, &mut assignment, &mut centroids);
        let updated = means(points, &assignment, k);
        objective_history.push(wcss(points, &assignment, &updated));
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < tol {
            break;
        }
    }

    for (a, p) in assignment.iter_mut().zip(points) {
        *a = nearest(p, &centroids);
    }
    repair_empty(points, &mut assignment, &mut centroids);
    objective_history.push(wcss(points, &assignment, &centroids));

    Ok(KMeans {
        assignment,
        centroids,
        objective_history,
        iterations,
    })
}

/// Which AP attributes feed the clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingFeatures {
    #[default]
    LocationAndRate,
    /// Proximity only; the rate column is zeroed.
    Location,
}

/// Min-max normalized clustering features, one per AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub x: f64,
    pub y: f64,
    pub rate: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.rate]
    }
}

fn min_max(values: impl Iterator<Item = f64> + Clone) -> impl Fn(f64) -> f64 {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    move |v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }
}

/// Features in AP id order.
pub fn features(topology: &NetworkTopology, kind: PoolingFeatures) -> Vec<FeatureVector> {
    let mut aps: Vec<_> = topology.aps.iter().collect();
    aps.sort_by_key(|a| a.id);
    let nx = min_max(aps.iter().map(|a| a.position.x));
    let ny = min_max(aps.iter().map(|a| a.position.y));
    let nr = min_max(aps.iter().map(|a| a.arrival_rate));
    aps.iter()
        .map(|a| FeatureVector {
            x: nx(a.position.x),
            y: ny(a.position.y),
            rate: match kind {
                PoolingFeatures::LocationAndRate => nr(a.arrival_rate),
                PoolingFeatures::Location => 0.0,
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolingPolicy {
    pub k: usize,
    /// Sub-pool of every AP, indexed by AP id.
    pub assignment: Vec<usize>,
    /// Aggregator AP of every sub-pool.
    pub aggregators: Vec<usize>,
}

impl PoolingPolicy {
    pub fn n_aps(&self) -> usize {
        self.assignment.len()
    }

    pub fn members(&self, pool: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&ap| self.assignment[ap] == pool)
            .collect()
    }

    pub fn is_aggregator(&self, ap: usize) -> bool {
        self.aggregators[self.assignment[ap]] == ap
    }

    /// Builds a policy from an AP → pool map, electing aggregators by rate.
    /// Pools are renumbered in order of their lowest member id.
    pub fn from_assignment(topology: &NetworkTopology, assignment: &[usize]) -> Result<Self> {
        let n = topology.len();
        if assignment.len() != n {
            return Err(Error::Shape(format!(
                "assignment of length {} for {n} APs",
                assignment.len()
            )));
        }
        let mut rename = std::collections::BTreeMap::new();
        let mut canonical = Vec::with_capacity(n);
        for &pool in assignment {
            let next = rename.len();
            canonical.push(*rename.entry(pool).or_insert(next));
        }
        let k = rename.len();
        let mut rates = vec![0.0; n];
        for ap in &topology.aps {
            if ap.id >= n {
                return Err(Error::invalid(format!("AP id {} out of range", ap.id)));
            }
            rates[ap.id] = ap.arrival_rate;
        }
        let mut aggregators: Vec<Option<usize>> = vec![None; k];
        for ap in 0..n {
            let slot = &mut aggregators[canonical[ap]];
            match *slot {
                Some(cur) if rates[cur] >= rates[ap] => {}
                _ => *slot = Some(ap),
            }
        }
        Ok(Self {
            k,
            assignment: canonical,
            aggregators: aggregators.into_iter().map(|a| a.unwrap()).collect(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.assignment.len();
        if self.k == 0 || self.k > n || self.aggregators.len() != self.k {
            return Err(Error::invalid(format!("policy with k = {} over {n} APs", self.k)));
        }
        let mut sizes = vec![0usize; self.k];
        for &p in &self.assignment {
            if p >= self.k {
                return Err(Error::invalid(format!("sub-pool {p} out of range")));
            }
            sizes[p] += 1;
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("empty sub-pool"));
        }
        for (p, &agg) in self.aggregators.iter().enumerate() {
            if agg >= n || self.assignment[agg] != p {
                return Err(Error::invalid(format!("aggregator {agg} not a member of pool {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolingOptions {
    pub features: PoolingFeatures,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for PoolingOptions {
    fn default() -> Self {
        Self {
            features: PoolingFeatures::LocationAndRate,
            max_iter: 300,
            tol: 1e-10,
        }
    }
}

pub fn form_subpools(topology: &NetworkTopology, k: usize, seed: u64) -> Result<PoolingPolicy> {
    form_subpools_with(topology, k, seed, &PoolingOptions::default())
}

pub fn form_subpools_with(
    topology: &NetworkTopology,
    k: usize,
    seed: u64,
    options: &PoolingOptions,
) -> Result<PoolingPolicy> {
    if !topology.has_rates() {
        return Err(Error::invalid("topology has no arrival rates"));
    }
    let points: Vec<[f64; 3]> = features(topology, options.features)
        .iter()
        .map(FeatureVector::as_array)
        .collect();
    let km = kmeans(&points, k, seed, options.max_iter, options.tol)?;
    PoolingPolicy::from_assignment(topology, &km.assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_topology, sample_arrival_rates};

    fn topo(n: usize, seed: u64) -> NetworkTopology {
        sample_arrival_rates(&generate_topology(n, 1000.0, seed).unwrap(), 1.0, seed).unwrap()
    }

    #[test]
    fn k_one_centroid_is_mean() {
        let pts = [[0.0, 1.0], [2.0, 3.0], [4.0, -1.0], [1.0, 1.0]];
        let km = kmeans(&pts, 1, 3, 50, 1e-12).unwrap();
        assert_eq!(km.centroids[0], [7.0 / 4.0, 1.0]);
        assert!(km.assignment.iter().all(|&a| a == 0));
    }

    #[test]
    fn k_equals_n_is_zero_objective() {
        let pts = [[0.0, 1.0], [2.0, 3.0], [4.0, -1.0], [1.0, 1.0]];
        let km = kmeans(&pts, 4, 9, 50, 1e-12).unwrap();
        assert_eq!(km.objective(), 0.0);
        let mut a = km.assignment.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn rejects_bad_k() {
        let pts = [[0.0], [1.0]];
        assert!(kmeans(&pts, 0, 0, 10, 1e-9).is_err());
        assert!(kmeans(&pts, 3, 0, 10, 1e-9).is_err());
        assert!(kmeans(&[[f64::NAN]], 1, 0, 10, 1e-9).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_clusters() {
        let pts = [[1.0, 1.0]; 5];
        let km = kmeans(&pts, 3, 0, 10, 1e-9).unwrap();
        let mut used = km.assignment.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn features_are_normalized() {
        let t = topo(32, 7);
        for f in features(&t, PoolingFeatures::LocationAndRate) {
            for v in f.as_array() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert!(features(&t, PoolingFeatures::Location).iter().all(|f| f.rate == 0.0));
    }

    #[test]
    fn identity_pooling() {
        let t = topo(32, 7);
        let p = form_subpools(&t, 32, 7).unwrap();
        p.validate().unwrap();
        for ap in 0..32 {
            assert!(p.is_aggregator(ap));
            assert_eq!(p.members(p.assignment[ap]), vec![ap]);
        }
    }

    #[test]
    fn single_pool_aggregates_at_max_rate() {
        let t = topo(32, 7);
        let p = form_subpools(&t, 1, 7).unwrap();
        let best = t
            .aps
            .iter()
            .max_by(|a, b| a.arrival_rate.total_cmp(&b.arrival_rate))
            .unwrap()
            .id;
        assert_eq!(p.aggregators, vec![best]);
    }

    #[test]
    fn eight_pools_reference() {
        let t = topo(32, 7);
        let p = form_subpools(&t, 8, 7).unwrap();
        p.validate().unwrap();
        for pool in 0..8 {
            let agg = p.aggregators[pool];
            for m in p.members(pool) {
                assert!(t.aps[agg].arrival_rate >= t.aps[m].arrival_rate);
            }
        }
    }

    #[test]
    fn aggregator_tie_goes_to_lowest_id() {
        let t = NetworkTopology::from_nodes(
            &[
                (crate::topology::Point { x: 0.0, y: 0.0 }, 0.5),
                (crate::topology::Point { x: 1.0, y: 0.0 }, 0.5),
            ],
            1.0,
        )
        .unwrap();
        let p = PoolingPolicy::from_assignment(&t, &[0, 0]).unwrap();
        assert_eq!(p.aggregators, vec![0]);
    }

    #[test]
    fn pool_ids_are_canonical() {
        let t = topo(4, 1);
        let p = PoolingPolicy::from_assignment(&t, &[3, 1, 3, 1]).unwrap();
        assert_eq!(p.assignment, vec![0, 1, 0, 1]);
        assert_eq!(p.k, 2);
    }

    #[test]
    fn rejects_topology_without_rates() {
        let t = generate_topology(4, 1.0, 0).unwrap();
        assert!(form_subpools(&t, 2, 0).is_err());
    }
}
