//! Resource-unit (RU) reservation and accounting.
//!
//! Reservations are made per sub-pool from the mean arrival rates. A trace is
//! then charged second by second; whenever a sub-pool's communication or
//! computing consumption in a second exceeds what was reserved for that
//! second, the excess is charged again at `overage_multiplier - 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pooling::PoolingPolicy;
use crate::sim::{SimConfig, TraceEvent, TrainingTrace};
use crate::topology::NetworkTopology;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// RU per data unit moved between two APs.
    pub ru_per_unit_migrated: f64,
    /// RU per data unit consumed by a training step.
    pub ru_per_unit_processed: f64,
    /// RU per model upload or broadcast.
    pub ru_per_model_exchange: f64,
    /// RU per local training step.
    pub ru_per_training_event: f64,
    pub overage_multiplier: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            ru_per_unit_migrated: 1.0,
            ru_per_unit_processed: 0.5,
            ru_per_model_exchange: 0.1,
            ru_per_training_event: 10.0,
            overage_multiplier: 2.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let constants = [
            self.ru_per_unit_migrated,
            self.ru_per_unit_processed,
            self.ru_per_model_exchange,
            self.ru_per_training_event,
        ];
        if constants.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::invalid("RU constants must be positive"));
        }
        if !(self.overage_multiplier.is_finite() && self.overage_multiplier >= 1.0) {
            return Err(Error::invalid("overage multiplier must be at least 1"));
        }
        Ok(())
    }

    /// Every RU constant multiplied by `c`; the multiplier is unchanged.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            ru_per_unit_migrated: self.ru_per_unit_migrated * c,
            ru_per_unit_processed: self.ru_per_unit_processed * c,
            ru_per_model_exchange: self.ru_per_model_exchange * c,
            ru_per_training_event: self.ru_per_training_event * c,
            overage_multiplier: self.overage_multiplier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReservation {
    pub aggregator: usize,
    /// Expected data units per second forwarded to the aggregator.
    pub migrated_units_per_s: f64,
    /// Expected data units per second trained on.
    pub processed_units_per_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReservationTotals {
    pub migration_ru: f64,
    pub processing_ru: f64,
    pub exchange_ru: f64,
    pub training_ru: f64,
}

impl ReservationTotals {
    pub fn total(&self) -> f64 {
        self.migration_ru + self.processing_ru + self.exchange_ru + self.training_ru
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservationPlan {
    pub pools: Vec<PoolReservation>,
    pub model: CostModel,
    pub horizon_s: u32,
    pub local_period_s: u32,
    pub agg_period_s: u32,
}

/// Model transfers per sub-pool and aggregation round: one upload, one
/// broadcast.
pub const EXCHANGES_PER_ROUND: u32 = 2;

impl ReservationPlan {
    pub fn migration_ru_per_s(&self, pool: usize) -> f64 {
        self.pools[pool].migrated_units_per_s * self.model.ru_per_unit_migrated
    }

    pub fn processing_ru_per_s(&self, pool: usize) -> f64 {
        self.pools[pool].processed_units_per_s * self.model.ru_per_unit_processed
    }

    pub fn exchange_ru_per_s(&self) -> f64 {
        f64::from(EXCHANGES_PER_ROUND) * self.model.ru_per_model_exchange / f64::from(self.agg_period_s)
    }

    pub fn training_ru_per_s(&self) -> f64 {
        self.model.ru_per_training_event / f64::from(self.local_period_s)
    }

    /// Model transfers reserved for second `t` (per sub-pool).
    fn exchanges_at(&self, t: u32) -> u64 {
        if t.is_multiple_of(self.agg_period_s) {
            u64::from(EXCHANGES_PER_ROUND)
        } else {
            0
        }
    }

    /// Training steps reserved for second `t` (per sub-pool).
    fn steps_at(&self, t: u32) -> u64 {
        u64::from(t.is_multiple_of(self.local_period_s))
    }

    /// Communication RU reserved for sub-pool `pool` in second `t`. Model
    /// exchange is reserved at the aggregation instants it occurs, which
    /// averages to [`Self::exchange_ru_per_s`].
    pub fn communication_budget(&self, pool: usize, t: u32) -> f64 {
        communication_ru(
            &self.model,
            self.pools[pool].migrated_units_per_s,
            self.exchanges_at(t) as f64,
        )
    }

    pub fn computing_budget(&self, pool: usize, t: u32) -> f64 {
        computing_ru(
            &self.model,
            self.pools[pool].processed_units_per_s,
            self.steps_at(t) as f64,
        )
    }

    pub fn totals(&self) -> ReservationTotals {
        let h = f64::from(self.horizon_s);
        let k = self.pools.len() as f64;
        let migrated: f64 = self.pools.iter().map(|p| p.migrated_units_per_s).sum();
        let processed: f64 = self.pools.iter().map(|p| p.processed_units_per_s).sum();
        let rounds = f64::from(self.horizon_s / self.agg_period_s);
        let steps = f64::from(self.horizon_s / self.local_period_s);
        ReservationTotals {
            migration_ru: self.model.ru_per_unit_migrated * (migrated * h),
            processing_ru: self.model.ru_per_unit_processed * (processed * h),
            exchange_ru: self.model.ru_per_model_exchange * (f64::from(EXCHANGES_PER_ROUND) * k * rounds),
            training_ru: self.model.ru_per_training_event * (k * steps),
        }
    }
}

fn communication_ru(model: &CostModel, migrated_units: f64, exchanges: f64) -> f64 {
    migrated_units * model.ru_per_unit_migrated + exchanges * model.ru_per_model_exchange
}

fn computing_ru(model: &CostModel, processed_units: f64, steps: f64) -> f64 {
    processed_units * model.ru_per_unit_processed + steps * model.ru_per_training_event
}

/// Reserves each sub-pool's expected consumption from the mean rates.
pub fn reserve(
    topology: &NetworkTopology,
    policy: &PoolingPolicy,
    model: &CostModel,
    sim: &SimConfig,
) -> Result<ReservationPlan> {
    model.validate()?;
    policy.validate()?;
    if policy.n_aps() != topology.len() {
        return Err(Error::Shape("policy and topology sizes differ".into()));
    }
    let mut pools: Vec<PoolReservation> = policy
        .aggregators
        .iter()
        .map(|&aggregator| PoolReservation {
            aggregator,
            migrated_units_per_s: 0.0,
            processed_units_per_s: 0.0,
        })
        .collect();
    let mut aps: Vec<_> = topology.aps.iter().collect();
    aps.sort_by_key(|a| a.id);
    for ap in aps {
        let pool = &mut pools[policy.assignment[ap.id]];
        pool.processed_units_per_s += ap.arrival_rate;
        if ap.id != pool.aggregator {
            pool.migrated_units_per_s += ap.arrival_rate;
        }
    }
    Ok(ReservationPlan {
        pools,
        model: *model,
        horizon_s: sim.horizon_s,
        local_period_s: sim.local_period_s,
        agg_period_s: sim.agg_period_s,
    })
}

/// Per-second RU series, index `t - 1` for second `t`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostSeries {
    pub migration: Vec<f64>,
    pub processing: Vec<f64>,
    pub exchange: Vec<f64>,
    pub training: Vec<f64>,
    pub overage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub horizon_s: u32,
    pub migration_ru: f64,
    pub processing_ru: f64,
    pub exchange_ru: f64,
    pub training_ru: f64,
    pub communication_overage_ru: f64,
    pub computing_overage_ru: f64,
    pub series: CostSeries,
}

impl CostLedger {
    pub fn overage_ru(&self) -> f64 {
        self.communication_overage_ru + self.computing_overage_ru
    }

    pub fn total(&self) -> f64 {
        self.migration_ru + self.processing_ru + self.exchange_ru + self.training_ru + self.overage_ru()
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Usage {
    migrated: u64,
    processed: u64,
    exchanges: u64,
    steps: u64,
}

/// Charges a trace against a reservation plan.
pub fn account(trace: &TrainingTrace, plan: &ReservationPlan, model: &CostModel) -> Result<CostLedger> {
    model.validate()?;
    trace.validate()?;
    let k = plan.pools.len();
    if trace.k != k {
        return Err(Error::Trace(format!("trace over {} sub-pools, plan over {k}", trace.k)));
    }
    if trace.horizon_s != plan.horizon_s {
        return Err(Error::Trace(format!(
            "trace horizon {} s, plan horizon {} s",
            trace.horizon_s, plan.horizon_s
        )));
    }
    let horizon = plan.horizon_s as usize;
    // usage[(t - 1) * k + pool]
    let mut usage = vec![Usage::default(); horizon * k];
    for ev in &trace.events {
        let t = ev.t() as usize;
        let slot = |pool: usize| (t.max(1) - 1) * k + pool;
        match *ev {
            TraceEvent::Migration { subpool, units, .. } => usage[slot(subpool)].migrated += units,
            TraceEvent::LocalTrain { subpool, samples, .. } => {
                let u = &mut usage[slot(subpool)];
                u.processed += samples;
                u.steps += 1;
            }
            TraceEvent::Upload { subpool, .. } | TraceEvent::Broadcast { subpool, .. } => {
                usage[slot(subpool)].exchanges += 1
            }
            TraceEvent::Arrival { .. } | TraceEvent::Aggregate { .. } | TraceEvent::Eval { .. } => {}
        }
    }

    let surcharge = model.overage_multiplier - 1.0;
    let mut series = CostSeries {
        migration: vec![0.0; horizon],
        processing: vec![0.0; horizon],
        exchange: vec![0.0; horizon],
        training: vec![0.0; horizon],
        overage: vec![0.0; horizon],
    };
    let mut totals = Usage::default();
    let mut comm_overage = 0.0;
    let mut comp_overage = 0.0;
    for s in 0..horizon {
        let t = (s + 1) as u32;
        let mut second = Usage::default();
        for pool in 0..k {
            let u = usage[s * k + pool];
            let comm = communication_ru(model, u.migrated as f64, u.exchanges as f64);
            let comp = computing_ru(model, u.processed as f64, u.steps as f64);
            let comm_excess = (comm - plan.communication_budget(pool, t)).max(0.0) * surcharge;
            let comp_excess = (comp - plan.computing_budget(pool, t)).max(0.0) * surcharge;
            comm_overage += comm_excess;
            comp_overage += comp_excess;
            series.overage[s] += comm_excess + comp_excess;
            second.migrated += u.migrated;
            second.processed += u.processed;
            second.exchanges += u.exchanges;
            second.steps += u.steps;
        }
        series.migration[s] = second.migrated as f64 * model.ru_per_unit_migrated;
        series.processing[s] = second.processed as f64 * model.ru_per_unit_processed;
        series.exchange[s] = second.exchanges as f64 * model.ru_per_model_exchange;
        series.training[s] = second.steps as f64 * model.ru_per_training_event;
        totals.migrated += second.migrated;
        totals.processed += second.processed;
        totals.exchanges += second.exchanges;
        totals.steps += second.steps;
    }

    Ok(CostLedger {
        horizon_s: plan.horizon_s,
        migration_ru: model.ru_per_unit_migrated * totals.migrated as f64,
        processing_ru: model.ru_per_unit_processed * totals.processed as f64,
        exchange_ru: model.ru_per_model_exchange * totals.exchanges as f64,
        training_ru: model.ru_per_training_event * totals.steps as f64,
        communication_overage_ru: comm_overage,
        computing_overage_ru: comp_overage,
        series,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub communication_ru: f64,
    pub computing_ru: f64,
    pub total_ru: f64,
    pub average_ru_per_s: f64,
}

pub fn summarize(ledger: &CostLedger) -> CostSummary {
    let communication_ru = ledger.migration_ru + ledger.exchange_ru + ledger.communication_overage_ru;
    let computing_ru = ledger.processing_ru + ledger.training_ru + ledger.computing_overage_ru;
    let total_ru = communication_ru + computing_ru;
    let average_ru_per_s = if ledger.horizon_s > 0 {
        total_ru / f64::from(ledger.horizon_s)
    } else {
        0.0
    };
    CostSummary {
        communication_ru,
        computing_ru,
        total_ru,
        average_ru_per_s,
    }
}
