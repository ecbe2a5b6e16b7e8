//! Run statistics, replication aggregation, time series and analytic oracles.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("time averages need a positive horizon")]
    ZeroHorizon,
    #[error("cannot merge replications of different scenarios")]
    MixedConfigs,
    #[error("cannot merge an empty replication list")]
    NoReplications,
}

/// Pool state right after a change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub time: f64,
    pub busy: u32,
    pub queued: u32,
}

/// Time-weighted record of one pool's busy and queued units.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolTrace {
    steps: Vec<TraceStep>,
    integrated_to: f64,
    busy_integral: f64,
    demand_integral: f64,
    wait_total: f64,
    grants: u64,
}

impl Default for PoolTrace {
    fn default() -> Self {
        PoolTrace {
            steps: vec![TraceStep {
                time: 0.0,
                busy: 0,
                queued: 0,
            }],
            integrated_to: 0.0,
            busy_integral: 0.0,
            demand_integral: 0.0,
            wait_total: 0.0,
            grants: 0,
        }
    }
}

impl PoolTrace {
    pub fn new() -> Self {
        Self::default()
    }

    fn last(&self) -> TraceStep {
        *self.steps.last().expect("trace starts with a step")
    }

    fn integrate_to(&mut self, now: f64) {
        let last = self.last();
        let dt = now - self.integrated_to;
        debug_assert!(dt >= 0.0, "trace time went backwards");
        self.busy_integral += f64::from(last.busy) * dt;
        self.demand_integral += f64::from(last.busy + last.queued) * dt;
        self.integrated_to = now;
    }

    /// Records the pool state after a change at `now`.
    pub fn observe(&mut self, now: f64, busy: u32, queued: u32) {
        self.integrate_to(now);
        let step = TraceStep { time: now, busy, queued };
        let last = self.steps.last_mut().expect("trace starts with a step");
        if last.time == now {
            *last = step;
        } else if (last.busy, last.queued) != (busy, queued) {
            self.steps.push(step);
        }
    }

    /// Records a granted request that waited `wait` days (zero if immediate).
    pub fn record_grant(&mut self, wait: f64) {
        self.wait_total += wait;
        self.grants += 1;
    }

    pub fn steps(&self) -> &[TraceStep] {
        &self.steps
    }

    /// Closes the trace at `horizon` and returns the pool's run totals.
    pub fn finish(mut self, name: &str, capacity: u32, horizon: f64) -> PoolStats {
        let last = self.last();
        if horizon > self.integrated_to {
            self.integrate_to(horizon);
        }
        if horizon > last.time {
            self.steps.push(TraceStep { time: horizon, ..last });
        }
        PoolStats {
            name: name.to_string(),
            capacity,
            busy_integral: self.busy_integral,
            demand_integral: self.demand_integral,
            wait_total: self.wait_total,
            grants: self.grants,
            trace: self.steps,
        }
    }
}

/// Per-pool run totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolStats {
    pub name: String,
    pub capacity: u32,
    /// ∫ busy units dt, in unit-days.
    pub busy_integral: f64,
    /// ∫ (busy + queued requested units) dt, in unit-days.
    pub demand_integral: f64,
    pub wait_total: f64,
    pub grants: u64,
    #[serde(skip)]
    pub trace: Vec<TraceStep>,
}

impl PoolStats {
    /// Mean time a granted request spent in the queue; zero if nothing was granted.
    pub fn mean_wait(&self) -> f64 {
        if self.grants == 0 {
            0.0
        } else {
            self.wait_total / self.grants as f64
        }
    }
}

/// Everything one replication measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub replication: u64,
    pub config_fingerprint: u64,
    pub class_names: Vec<String>,
    pub received_per_class: Vec<u64>,
    pub delivered_per_class: Vec<u64>,
    pub arrival_times_per_class: Vec<Vec<f64>>,
    pub delivery_times_per_class: Vec<Vec<f64>>,
    pub pools: Vec<PoolStats>,
    /// Time of the last dispatched event.
    pub horizon: f64,
    pub dispatches: u64,
    pub in_system: u64,
    pub rework_total: u64,
    pub phase_visits_total: u64,
    pub trace_digest: u64,
}

fn merged_sorted(per_class: &[Vec<f64>]) -> Vec<f64> {
    let mut all: Vec<f64> = per_class.iter().flatten().copied().collect();
    all.sort_by(f64::total_cmp);
    all
}

impl RunStats {
    pub fn received(&self) -> u64 {
        self.received_per_class.iter().sum()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered_per_class.iter().sum()
    }

    pub fn arrival_art(&self) -> Option<f64> {
        art_mean(&merged_sorted(&self.arrival_times_per_class))
    }

    pub fn delivery_art(&self) -> Option<f64> {
        art_mean(&merged_sorted(&self.delivery_times_per_class))
    }

    pub fn class_arrival_art(&self, class: usize) -> Option<f64> {
        art_mean(&self.arrival_times_per_class[class])
    }

    pub fn class_delivery_art(&self, class: usize) -> Option<f64> {
        art_mean(&self.delivery_times_per_class[class])
    }

    pub fn pool_averages(&self) -> Result<Vec<PoolAverages>, MetricsError> {
        self.pools
            .iter()
            .map(|p| busy_average(p, self.horizon))
            .collect()
    }

    /// Headline per-replication figures, as written to reports.
    pub fn summary(&self) -> ReplicationSummary {
        let pools = self
            .pools
            .iter()
            .map(|p| {
                let avg = busy_average(p, self.horizon).unwrap_or_default();
                PoolSummary {
                    name: p.name.clone(),
                    capacity: p.capacity,
                    avg_busy: avg.avg_busy,
                    utilization: avg.utilization,
                    avg_demand: avg.avg_demand,
                    mean_wait: p.mean_wait(),
                }
            })
            .collect();
        ReplicationSummary {
            replication: self.replication,
            received_per_class: self.received_per_class.clone(),
            delivered_per_class: self.delivered_per_class.clone(),
            arrival_art_per_class: (0..self.class_names.len())
                .map(|c| self.class_arrival_art(c))
                .collect(),
            delivery_art_per_class: (0..self.class_names.len())
                .map(|c| self.class_delivery_art(c))
                .collect(),
            arrival_art: self.arrival_art(),
            delivery_art: self.delivery_art(),
            horizon: self.horizon,
            dispatches: self.dispatches,
            rework_total: self.rework_total,
            pools,
            trace_digest: format!("{:016x}", self.trace_digest),
        }
    }
}

/// Mean gap between consecutive timestamps; `None` with fewer than two.
pub fn art_mean(timestamps: &[f64]) -> Option<f64> {
    match timestamps {
        [first, .., last] => Some((last - first) / (timestamps.len() - 1) as f64),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PoolAverages {
    pub avg_busy: f64,
    pub utilization: f64,
    pub avg_demand: f64,
}

pub fn busy_average(pool: &PoolStats, horizon: f64) -> Result<PoolAverages, MetricsError> {
    if horizon.is_nan() || horizon <= 0.0 {
        return Err(MetricsError::ZeroHorizon);
    }
    let avg_busy = pool.busy_integral / horizon;
    Ok(PoolAverages {
        avg_busy,
        utilization: if pool.capacity == 0 {
            0.0
        } else {
            avg_busy / f64::from(pool.capacity)
        },
        avg_demand: pool.demand_integral / horizon,
    })
}

/// Expected number of visits to each phase of a linear chain with one-step
/// rework: after phase `i` an entity moves on with probability `1 - q`
/// (leaving after the last phase) and falls back to phase `max(i - 1, 0)`
/// with probability `q`.
///
/// Solves `(I - Pᵀ) v = e₀` over the transient states.
pub fn expected_phase_visits(q: f64, phases: usize) -> Vec<f64> {
    assert!((0.0..1.0).contains(&q), "error probability must lie in [0, 1)");
    assert!(phases >= 1);
    let mut transition = DMatrix::<f64>::zeros(phases, phases);
    for i in 0..phases {
        if i + 1 < phases {
            transition[(i, i + 1)] += 1.0 - q;
        }
        transition[(i, i.saturating_sub(1))] += q;
    }
    let system = DMatrix::<f64>::identity(phases, phases) - transition.transpose();
    let mut rhs = DVector::<f64>::zeros(phases);
    rhs[0] = 1.0;
    let visits = system
        .lu()
        .solve(&rhs)
        .expect("rework chain with q < 1 is absorbing");
    visits.iter().copied().collect()
}

/// Uncapacitated expected busy units per pool:
/// `L_p = λ · Σ_c mix_c · Σ_{phases j on p} v_j(q_c) · demand_{c,j} · E[duration_{j,c}]`.
pub fn littles_law_expectations(config: &ScenarioConfig) -> Vec<f64> {
    let arrival_rate = 1.0 / config.arrival.mean().expect("continuous arrival law");
    let phase_pools = config.phase_pools();
    let mut load = vec![0.0; config.pools.len()];
    for (c, class) in config.classes.iter().enumerate() {
        let visits = expected_phase_visits(class.error_prob, config.phases.len());
        for (j, phase) in config.phases.iter().enumerate() {
            let duration = phase.duration_per_class[c].mean().expect("continuous duration law");
            load[phase_pools[j]] +=
                class.probability * visits[j] * f64::from(class.demands[j]) * duration;
        }
    }
    load.iter().map(|l| arrival_rate * l).collect()
}

/// Mean and sample standard deviation of the defined values of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl Summary {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Summary {
        let xs: Vec<f64> = values.into_iter().flatten().collect();
        let n = xs.len();
        if n == 0 {
            return Summary { n, mean: None, std: None };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Summary {
            n,
            mean: Some(mean),
            std,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolSummary {
    pub name: String,
    pub capacity: u32,
    pub avg_busy: f64,
    pub utilization: f64,
    pub avg_demand: f64,
    pub mean_wait: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationSummary {
    pub replication: u64,
    pub received_per_class: Vec<u64>,
    pub delivered_per_class: Vec<u64>,
    pub arrival_art_per_class: Vec<Option<f64>>,
    pub delivery_art_per_class: Vec<Option<f64>>,
    pub arrival_art: Option<f64>,
    pub delivery_art: Option<f64>,
    pub horizon: f64,
    pub dispatches: u64,
    pub rework_total: u64,
    pub pools: Vec<PoolSummary>,
    pub trace_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAggregate {
    pub name: String,
    pub received: Summary,
    pub delivered: Summary,
    pub arrival_art: Summary,
    pub delivery_art: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoolAggregate {
    pub name: String,
    pub capacity: u32,
    pub avg_busy: Summary,
    pub utilization: Summary,
    pub avg_demand: Summary,
    pub mean_wait: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub replications: usize,
    pub received: Summary,
    pub delivered: Summary,
    pub arrival_art: Summary,
    pub delivery_art: Summary,
    pub horizon: Summary,
    pub classes: Vec<ClassAggregate>,
    pub pools: Vec<PoolAggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub tool_version: String,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub replications: Vec<ReplicationSummary>,
    pub aggregate: Aggregate,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Folds replications of one scenario into a report, ordered by replication index.
pub fn merge_replications(
    scenario: &ScenarioConfig,
    seed: u64,
    stats: &[RunStats],
) -> Result<Report, MetricsError> {
    if stats.is_empty() {
        return Err(MetricsError::NoReplications);
    }
    let fingerprint = scenario.fingerprint();
    if stats.iter().any(|s| s.config_fingerprint != fingerprint) {
        return Err(MetricsError::MixedConfigs);
    }
    let mut ordered: Vec<&RunStats> = stats.iter().collect();
    ordered.sort_by_key(|s| s.replication);
    let summaries: Vec<ReplicationSummary> = ordered.iter().map(|s| s.summary()).collect();

    let count = |f: &dyn Fn(&ReplicationSummary) -> f64| Summary::of(summaries.iter().map(|s| Some(f(s))));
    let optional = |f: &dyn Fn(&ReplicationSummary) -> Option<f64>| Summary::of(summaries.iter().map(f));

    let classes = scenario
        .classes
        .iter()
        .enumerate()
        .map(|(c, class)| ClassAggregate {
            name: class.name.clone(),
            received: count(&|s| s.received_per_class[c] as f64),
            delivered: count(&|s| s.delivered_per_class[c] as f64),
            arrival_art: optional(&|s| s.arrival_art_per_class[c]),
            delivery_art: optional(&|s| s.delivery_art_per_class[c]),
        })
        .collect();
    let pools = scenario
        .pools
        .iter()
        .enumerate()
        .map(|(p, pool)| PoolAggregate {
            name: pool.name.clone(),
            capacity: pool.capacity,
            avg_busy: count(&|s| s.pools[p].avg_busy),
            utilization: count(&|s| s.pools[p].utilization),
            avg_demand: count(&|s| s.pools[p].avg_demand),
            mean_wait: count(&|s| s.pools[p].mean_wait),
        })
        .collect();
    let aggregate = Aggregate {
        replications: summaries.len(),
        received: count(&|s| s.received_per_class.iter().sum::<u64>() as f64),
        delivered: count(&|s| s.delivered_per_class.iter().sum::<u64>() as f64),
        arrival_art: optional(&|s| s.arrival_art),
        delivery_art: optional(&|s| s.delivery_art),
        horizon: count(&|s| s.horizon),
        classes,
        pools,
    };
    Ok(Report {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: scenario.clone(),
        seed,
        replications: summaries,
        aggregate,
    })
}

/// CSV `time,pool,busy,queued` step samples for every pool, grouped by pool.
pub fn export_timeseries(pools: &[PoolStats]) -> String {
    let mut out = String::from("time,pool,busy,queued\n");
    for pool in pools {
        for step in &pool.trace {
            writeln!(out, "{:.6},{},{},{}", step.time, pool.name, step.busy, step.queued)
                .expect("writing to a String");
        }
    }
    out
}
