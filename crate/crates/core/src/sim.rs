//! Training-phase simulator.
//!
//! Time advances in one-second ticks. Each tick every AP receives new samples
//! from its shard; APs that are not their sub-pool's aggregator forward them
//! to the aggregator. Every `local_period_s` each aggregator takes one SGD
//! step on what it accrued since its previous step, and every
//! `agg_period_s` the aggregators' models are combined with FedAvg and the
//! global model is sent back. Everything that costs resources is recorded
//! in a [`TrainingTrace`].

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::mlp::{self, Batch, MlpParameters};
use crate::pooling::PoolingPolicy;
use crate::rng::{self, stream};
use crate::topology::{DataShard, NetworkTopology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalMode {
    /// Poisson counts with mean `rate` per second.
    #[default]
    Poisson,
    /// `floor(rate * (t + 1)) - floor(rate * t)` arrivals in second `t`.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchPolicy {
    /// Train on everything accrued since the previous step.
    #[default]
    AllAccrued,
    /// Train on at most this many accrued samples; the rest wait.
    MaxSamples(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon_s: u32,
    pub local_period_s: u32,
    pub agg_period_s: u32,
    pub lr: f64,
    pub arrivals: ArrivalMode,
    pub batch: BatchPolicy,
    pub eval_period_s: u32,
    /// Leading test samples whose mean loss is reported at each evaluation.
    pub probe_size: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon_s: 600,
            local_period_s: 1,
            agg_period_s: 10,
            lr: 0.01,
            arrivals: ArrivalMode::Poisson,
            batch: BatchPolicy::AllAccrued,
            eval_period_s: 10,
            probe_size: 500,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_period_s == 0 || self.agg_period_s == 0 || self.eval_period_s == 0 {
            return Err(Error::invalid("periods must be at least one second"));
        }
        if !self.agg_period_s.is_multiple_of(self.local_period_s) {
            return Err(Error::invalid(format!(
                "agg_period_s {} is not a multiple of local_period_s {}",
                self.agg_period_s, self.local_period_s
            )));
        }
        if self.horizon_s < self.agg_period_s {
            return Err(Error::invalid(format!(
                "horizon {} s is shorter than one aggregation round ({} s)",
                self.horizon_s, self.agg_period_s
            )));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid(format!("learning rate {}", self.lr)));
        }
        if self.batch == BatchPolicy::MaxSamples(0) {
            return Err(Error::invalid("batch cap must be positive"));
        }
        Ok(())
    }

    pub fn rounds(&self) -> u32 {
        self.horizon_s / self.agg_period_s
    }
}

/// Samples that reached one AP during one second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApArrivals {
    pub ap: usize,
    pub samples: Vec<usize>,
    /// How many of `samples` come from the first pass over the shard. Later
    /// passes reuse samples the aggregator already holds.
    pub fresh: usize,
}

struct ShardQueue {
    order: Vec<usize>,
    cursor: usize,
    first_pass: bool,
}

/// Per-AP arrival stream drawn without replacement from each AP's shard;
/// an exhausted shard is reshuffled and replayed.
pub struct ArrivalProcess {
    rates: Vec<f64>,
    mode: ArrivalMode,
    queues: Vec<ShardQueue>,
    poisson: Vec<Option<Poisson<f64>>>,
    rng: rng::Rng,
    t: u64,
}

impl ArrivalProcess {
    /// `shards[i]` must belong to AP `i`.
    pub fn new(rates: &[f64], shards: &[DataShard], mode: ArrivalMode, seed: u64) -> Result<Self> {
        if rates.len() != shards.len() {
            return Err(Error::Shape(format!(
                "{} rates for {} shards",
                rates.len(),
                shards.len()
            )));
        }
        let mut rng = rng::seeded(seed, stream::ARRIVALS);
        let mut queues = Vec::with_capacity(shards.len());
        for (i, shard) in shards.iter().enumerate() {
            if shard.ap_id != i {
                return Err(Error::invalid(format!("shard {i} belongs to AP {}", shard.ap_id)));
            }
            if shard.sample_indices.is_empty() {
                return Err(Error::invalid(format!("AP {i} has an empty shard")));
            }
            let mut order = shard.sample_indices.clone();
            order.shuffle(&mut rng);
            queues.push(ShardQueue {
                order,
                cursor: 0,
                first_pass: true,
            });
        }
        let poisson = rates
            .iter()
            .map(|&r| {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::invalid(format!("arrival rate {r}")));
                }
                Ok(match mode {
                    ArrivalMode::Poisson => {
                        Some(Poisson::new(r).map_err(|e| Error::invalid(format!("rate {r}: {e}")))?)
                    }
                    ArrivalMode::Deterministic => None,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            rates: rates.to_vec(),
            mode,
            queues,
            poisson,
            rng,
            t: 0,
        })
    }

    fn count(&mut self, ap: usize) -> usize {
        match self.mode {
            ArrivalMode::Poisson => self.poisson[ap].as_ref().unwrap().sample(&mut self.rng) as usize,
            ArrivalMode::Deterministic => {
                let r = self.rates[ap];
                ((r * (self.t + 1) as f64).floor() - (r * self.t as f64).floor()) as usize
            }
        }
    }

    /// Arrivals of the next second, one entry per AP in id order.
    pub fn next_second(&mut self) -> Vec<ApArrivals> {
        let mut out = Vec::with_capacity(self.queues.len());
        for ap in 0..self.queues.len() {
            let n = self.count(ap);
            let mut samples = Vec::with_capacity(n);
            let mut fresh = 0;
            for _ in 0..n {
                let q = &mut self.queues[ap];
                if q.cursor == q.order.len() {
                    q.order.shuffle(&mut self.rng);
                    q.cursor = 0;
                    q.first_pass = false;
                }
                samples.push(q.order[q.cursor]);
                q.cursor += 1;
                if q.first_pass {
                    fresh += 1;
                }
            }
            out.push(ApArrivals { ap, samples, fresh });
        }
        self.t += 1;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Arrival {
        t: u32,
        ap: usize,
        subpool: usize,
        units: u64,
    },
    Migration {
        t: u32,
        from_ap: usize,
        to_ap: usize,
        subpool: usize,
        units: u64,
    },
    LocalTrain {
        t: u32,
        subpool: usize,
        ap: usize,
        samples: u64,
        loss: f64,
    },
    Upload {
        t: u32,
        subpool: usize,
        ap: usize,
    },
    Aggregate {
        t: u32,
        models: usize,
        samples: u64,
    },
    Broadcast {
        t: u32,
        subpool: usize,
        ap: usize,
    },
    Eval {
        t: u32,
        accuracy: f64,
        loss: f64,
    },
}

impl TraceEvent {
    pub fn t(&self) -> u32 {
        match *self {
            TraceEvent::Arrival { t, .. }
            | TraceEvent::Migration { t, .. }
            | TraceEvent::LocalTrain { t, .. }
            | TraceEvent::Upload { t, .. }
            | TraceEvent::Aggregate { t, .. }
            | TraceEvent::Broadcast { t, .. }
            | TraceEvent::Eval { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub horizon_s: u32,
    pub k: usize,
    pub events: Vec<TraceEvent>,
}

impl TrainingTrace {
    pub fn empty(horizon_s: u32, k: usize) -> Self {
        Self {
            horizon_s,
            k,
            events: Vec::new(),
        }
    }

    /// Checks ordering, id ranges and that every aggregation is preceded by
    /// one upload per sub-pool and followed by one broadcast per sub-pool.
    pub fn validate(&self) -> Result<()> {
        let mut last_t = 0;
        let mut uploads = 0usize;
        let mut pending_broadcasts = 0usize;
        for (i, ev) in self.events.iter().enumerate() {
            let t = ev.t();
            if t < last_t {
                return Err(Error::Trace(format!("event {i} at t={t} after t={last_t}")));
            }
            if t > self.horizon_s {
                return Err(Error::Trace(format!("event {i} at t={t} beyond horizon")));
            }
            if t != last_t && (uploads != 0 || pending_broadcasts != 0) {
                return Err(Error::Trace(format!("incomplete aggregation round before t={t}")));
            }
            last_t = t;
            let pool = match *ev {
                TraceEvent::Arrival { subpool, .. }
                | TraceEvent::Migration { subpool, .. }
                | TraceEvent::LocalTrain { subpool, .. } => Some(subpool),
                TraceEvent::Upload { subpool, .. } => {
                    uploads += 1;
                    Some(subpool)
                }
                TraceEvent::Aggregate { models, .. } => {
                    if uploads != self.k || models != self.k {
                        return Err(Error::Trace(format!(
                            "aggregation at t={t} after {uploads} uploads of {} sub-pools",
                            self.k
                        )));
                    }
                    uploads = 0;
                    pending_broadcasts = self.k;
                    None
                }
                TraceEvent::Broadcast { subpool, .. } => {
                    if pending_broadcasts == 0 {
                        return Err(Error::Trace(format!("unmatched broadcast at t={t}")));
                    }
                    pending_broadcasts -= 1;
                    Some(subpool)
                }
                TraceEvent::Eval { .. } => None,
            };
            if let Some(p) = pool {
                if p >= self.k {
                    return Err(Error::Trace(format!("sub-pool {p} out of range at t={t}")));
                }
            }
        }
        if uploads != 0 || pending_broadcasts != 0 {
            return Err(Error::Trace("trace ends inside an aggregation round".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t: u32,
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub trace: TrainingTrace,
    pub global: MlpParameters,
    /// Global-model accuracy and probe loss at t = 0 and every evaluation.
    pub curve: Vec<CurvePoint>,
}

pub fn simulate(
    topology: &NetworkTopology,
    policy: &PoolingPolicy,
    shards: &[DataShard],
    sim: &SimConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<SimOutcome> {
    sim.validate()?;
    policy.validate()?;
    if policy.n_aps() != topology.len() {
        return Err(Error::Shape(format!(
            "policy over {} APs for a topology of {}",
            policy.n_aps(),
            topology.len()
        )));
    }
    if !topology.has_rates() {
        return Err(Error::invalid("topology has no arrival rates"));
    }
    if shards.iter().flat_map(|s| &s.sample_indices).any(|&i| i >= train.len()) {
        return Err(Error::invalid("shard index beyond the training set"));
    }
    let mut rates = vec![0.0; topology.len()];
    for ap in &topology.aps {
        rates[ap.id] = ap.arrival_rate;
    }
    let mut arrivals = ArrivalProcess::new(&rates, shards, sim.arrivals, sim.seed)?;

    let k = policy.k;
    let mut global = mlp::init_mlp(sim.seed);
    let mut locals = vec![global.clone(); k];
    let mut pending: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut trained = vec![0u64; k];
    let mut trace = TrainingTrace::empty(sim.horizon_s, k);

    let evaluate = |params: &MlpParameters, t: u32| -> Result<CurvePoint> {
        let (accuracy, loss) = mlp::evaluate(params, test, sim.probe_size)?;
        Ok(CurvePoint { t, accuracy, loss })
    };
    let mut curve = vec![evaluate(&global, 0)?];

    for t in 1..=sim.horizon_s {
        for a in arrivals.next_second() {
            if a.samples.is_empty() {
                continue;
            }
            let pool = policy.assignment[a.ap];
            let agg = policy.aggregators[pool];
            trace.events.push(TraceEvent::Arrival {
                t,
                ap: a.ap,
                subpool: pool,
                units: a.samples.len() as u64,
            });
            if a.ap != agg && a.fresh > 0 {
                trace.events.push(TraceEvent::Migration {
                    t,
                    from_ap: a.ap,
                    to_ap: agg,
                    subpool: pool,
                    units: a.fresh as u64,
                });
            }
            pending[pool].extend_from_slice(&a.samples);
        }

        if t.is_multiple_of(sim.local_period_s) {
            for pool in 0..k {
                if pending[pool].is_empty() {
                    continue;
                }
                let take = match sim.batch {
                    BatchPolicy::AllAccrued => pending[pool].len(),
                    BatchPolicy::MaxSamples(cap) => cap.min(pending[pool].len()),
                };
                let batch = Batch::gather(train, &pending[pool][..take]);
                pending[pool].drain(..take);
                let loss = mlp::sgd_step(&mut locals[pool], &batch, sim.lr)?;
                trained[pool] += take as u64;
                trace.events.push(TraceEvent::LocalTrain {
                    t,
                    subpool: pool,
                    ap: policy.aggregators[pool],
                    samples: take as u64,
                    loss,
                });
            }
        }

        if t.is_multiple_of(sim.agg_period_s) {
            for pool in 0..k {
                trace.events.push(TraceEvent::Upload {
                    t,
                    subpool: pool,
                    ap: policy.aggregators[pool],
                });
            }
            let samples: u64 = trained.iter().sum();
            if samples > 0 {
                let weights: Vec<f64> = trained.iter().map(|&n| n as f64).collect();
                global = mlp::fedavg(&locals, &weights)?;
            }
            trace.events.push(TraceEvent::Aggregate { t, models: k, samples });
            for (pool, local) in locals.iter_mut().enumerate() {
                local.clone_from(&global);
                trace.events.push(TraceEvent::Broadcast {
                    t,
                    subpool: pool,
                    ap: policy.aggregators[pool],
                });
            }
            trained.iter_mut().for_each(|n| *n = 0);
        }

        if t.is_multiple_of(sim.eval_period_s) {
            let point = evaluate(&global, t)?;
            trace.events.push(TraceEvent::Eval {
                t,
                accuracy: point.accuracy,
                loss: point.loss,
            });
            curve.push(point);
        }
    }

    Ok(SimOutcome { trace, global, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Point;

    fn shard(ap: usize, idx: std::ops::Range<usize>) -> DataShard {
        DataShard {
            ap_id: ap,
            sample_indices: idx.collect(),
            label_histogram: [0; 10],
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let short = SimConfig {
            horizon_s: 5,
            ..SimConfig::default()
        };
        assert!(short.validate().is_err());
        let misaligned = SimConfig {
            local_period_s: 3,
            ..SimConfig::default()
        };
        assert!(misaligned.validate().is_err());
    }

    #[test]
    fn deterministic_counts_follow_floor_differences() {
        let shards = [shard(0, 0..10), shard(1, 10..20)];
        let mut p = ArrivalProcess::new(&[0.5, 2.0], &shards, ArrivalMode::Deterministic, 1).unwrap();
        let counts: Vec<Vec<usize>> = (0..4)
            .map(|_| p.next_second().iter().map(|a| a.samples.len()).collect())
            .collect();
        assert_eq!(counts, vec![vec![0, 2], vec![1, 2], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn arrivals_exhaust_then_recycle() {
        let shards = [shard(0, 0..3)];
        let mut p = ArrivalProcess::new(&[2.0], &shards, ArrivalMode::Deterministic, 4).unwrap();
        let s1 = p.next_second();
        let s2 = p.next_second();
        assert_eq!((s1[0].fresh, s2[0].fresh), (2, 1));
        let mut first_pass: Vec<usize> = s1[0].samples.iter().chain(&s2[0].samples[..1]).copied().collect();
        first_pass.sort_unstable();
        assert_eq!(first_pass, vec![0, 1, 2]);
        let s3 = p.next_second();
        assert_eq!(s3[0].fresh, 0);
        assert_eq!(s3[0].samples.len(), 2);
    }

    #[test]
    fn arrival_process_rejects_bad_inputs() {
        let shards = [shard(0, 0..3)];
        assert!(ArrivalProcess::new(&[0.0], &shards, ArrivalMode::Poisson, 0).is_err());
        assert!(ArrivalProcess::new(&[1.0, 1.0], &shards, ArrivalMode::Poisson, 0).is_err());
        assert!(ArrivalProcess::new(&[1.0], &[shard(0, 0..0)], ArrivalMode::Poisson, 0).is_err());
    }

    #[test]
    fn trace_validation_catches_missing_upload() {
        let mut trace = TrainingTrace::empty(10, 2);
        trace.events.push(TraceEvent::Upload {
            t: 10,
            subpool: 0,
            ap: 0,
        });
        trace.events.push(TraceEvent::Aggregate {
            t: 10,
            models: 2,
            samples: 1,
        });
        assert!(trace.validate().is_err());

        let mut ok = TrainingTrace::empty(10, 1);
        ok.events.push(TraceEvent::Upload {
            t: 10,
            subpool: 0,
            ap: 0,
        });
        ok.events.push(TraceEvent::Aggregate {
            t: 10,
            models: 1,
            samples: 1,
        });
        ok.events.push(TraceEvent::Broadcast {
            t: 10,
            subpool: 0,
            ap: 0,
        });
        assert!(ok.validate().is_ok());

        let mut backwards = TrainingTrace::empty(10, 1);
        backwards.events.push(TraceEvent::Eval {
            t: 5,
            accuracy: 0.0,
            loss: 0.0,
        });
        backwards.events.push(TraceEvent::Eval {
            t: 4,
            accuracy: 0.0,
            loss: 0.0,
        });
        assert!(backwards.validate().is_err());
    }

    #[test]
    fn simulate_rejects_short_horizon() {
        let topo = NetworkTopology::from_nodes(&[(Point { x: 0.0, y: 0.0 }, 1.0)], 1.0).unwrap();
        let policy = PoolingPolicy::from_assignment(&topo, &[0]).unwrap();
        let ds = LabeledDataset::new(vec![0.0; 784 * 2], vec![0, 1], 784).unwrap();
        let cfg = SimConfig {
            horizon_s: 3,
            ..SimConfig::default()
        };
        assert!(simulate(&topo, &policy, &[shard(0, 0..2)], &cfg, &ds, &ds).is_err());
    }
}
