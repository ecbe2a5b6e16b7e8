use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{EngineError, EntityId, Event, Kernel, Model, NodeId, RunOutcome, SimTime};
use crate::metrics::{PoolTrace, RunStats};
use crate::scenario::{ScenarioConfig, ValidationIssue};
use crate::stochastic::RngStream;

use super::network::{Network, NodeKind, SOURCE};
use super::pool::{CaptureOutcome, PoolError, ResourcePool};
use super::routing::{branch_decide, Outcome};

/// Hard bound on error-driven fallbacks per entity. With every error
/// probability below one, reaching it means the model is broken.
pub const MAX_REWORK: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<ValidationIssue>),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invariant violated at t={time}: {what}")]
    InvariantViolated { time: f64, what: String },
    #[error("entity {entity} exceeded {MAX_REWORK} rework loops")]
    ReworkLimit { entity: EntityId },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimulationOptions {
    /// Skip the demand ≤ capacity check; oversize requests queue forever.
    pub allow_infeasible: bool,
    /// Keep `(time, seq)` of every dispatched event.
    pub record_events: bool,
    /// Re-check pool conservation after every dispatch.
    pub check_invariants: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseVisit {
    pub phase: usize,
    pub start: f64,
    pub end: f64,
}

/// A project moving through the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub id: EntityId,
    pub class_index: usize,
    pub created_at: f64,
    pub delivered_at: Option<f64>,
    pub phase_visits: Vec<PhaseVisit>,
    pub rework_count: u64,
    held: Option<(usize, u32)>,
    waiting_at: Option<NodeId>,
    open_visit: Option<(usize, f64)>,
}

impl Entity {
    /// Pool index and units currently captured.
    pub fn held(&self) -> Option<(usize, u32)> {
        self.held
    }
}

/// One replication of a scenario, bound to a [`Kernel`] through [`Model`].
///
/// Arrival gaps and class draws come from the replication stream; each
/// entity draws its durations and branch outcomes from its own substream, so
/// an entity's path does not depend on how it interleaves with others.
#[derive(Debug)]
pub struct Simulation {
    network: Network,
    pools: Vec<ResourcePool>,
    traces: Vec<PoolTrace>,
    entities: Vec<Entity>,
    entity_rngs: Vec<Option<RngStream>>,
    source_rng: RngStream,
    emitted: u64,
    delivered: u64,
    counter_times: Vec<Vec<Vec<f64>>>,
    class_names: Vec<String>,
    replication: u64,
    fingerprint: u64,
    options: SimulationOptions,
    event_log: Vec<(SimTime, u64)>,
}

/// Output of a finished replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub stats: RunStats,
    pub outcome: RunOutcome,
    pub entities: Vec<Entity>,
    /// `(time, seq)` per dispatch; empty unless requested.
    pub event_log: Vec<(SimTime, u64)>,
}

impl Simulation {
    pub fn new(
        config: &ScenarioConfig,
        master_seed: u64,
        replication: u64,
        options: SimulationOptions,
    ) -> Result<Self, WorkflowError> {
        let mut issues = config.structural_issues();
        if !options.allow_infeasible {
            issues.extend(config.feasibility_issues());
        }
        if !issues.is_empty() {
            return Err(WorkflowError::InvalidScenario(issues));
        }
        let network = Network::waterfall(config);
        network.validate().map_err(WorkflowError::InvalidNetwork)?;
        let pools = config
            .pools
            .iter()
            .map(|p| {
                let pool = ResourcePool::new(p.name.clone(), p.capacity);
                if options.allow_infeasible {
                    pool.accepting_oversize()
                } else {
                    pool
                }
            })
            .collect();
        let classes = config.classes.len();
        Ok(Simulation {
            counter_times: vec![vec![Vec::new(); classes]; network.counters.len()],
            network,
            pools,
            traces: vec![PoolTrace::new(); config.pools.len()],
            entities: Vec::new(),
            entity_rngs: Vec::new(),
            source_rng: RngStream::new(master_seed, replication),
            emitted: 0,
            delivered: 0,
            class_names: config.classes.iter().map(|c| c.name.clone()).collect(),
            replication,
            fingerprint: config.fingerprint(),
            options,
            event_log: Vec::new(),
        })
    }

    /// Schedules the first arrival at t = 0.
    pub fn start(&mut self, kernel: &mut Kernel) -> Result<(), WorkflowError> {
        kernel.schedule(SimTime::ZERO, SOURCE, None)?;
        Ok(())
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn pools(&self) -> &[ResourcePool] {
        &self.pools
    }

    fn observe_pool(&mut self, pool: usize, now: f64) {
        let p = &self.pools[pool];
        self.traces[pool].observe(now, p.busy(), p.queued_units());
    }

    fn rng(&mut self, entity: EntityId) -> &mut RngStream {
        self.entity_rngs[entity as usize]
            .as_mut()
            .expect("entity still in system")
    }

    /// Executes the semantics of `node` for `entity` at `now`.
    fn step_entity(
        &mut self,
        entity: Option<EntityId>,
        node: NodeId,
        kernel: &mut Kernel,
    ) -> Result<(), WorkflowError> {
        let now = kernel.now();
        let t = now.days();
        let node_kind = &self.network.nodes[node];
        match node_kind {
            NodeKind::Source {
                arrival,
                mix,
                limit,
                next,
            } => {
                let (next, limit) = (*next, *limit);
                let class = mix
                    .sample(&mut self.source_rng)
                    .index()
                    .expect("class mix is categorical");
                let gap = arrival
                    .sample(&mut self.source_rng)
                    .real()
                    .expect("arrival law is continuous");
                let id = self.emitted;
                self.entities.push(Entity {
                    id,
                    class_index: class,
                    created_at: t,
                    delivered_at: None,
                    phase_visits: Vec::new(),
                    rework_count: 0,
                    held: None,
                    waiting_at: None,
                    open_visit: None,
                });
                self.entity_rngs.push(Some(self.source_rng.substream(id)));
                self.emitted += 1;
                kernel.schedule(now, next, Some(id))?;
                if self.emitted < limit {
                    kernel.schedule_in(gap, SOURCE, None)?;
                }
            }
            NodeKind::Counter { counter, next, .. } => {
                let (counter, next) = (*counter, *next);
                let id = entity.expect("counter needs an entity");
                let class = self.entities[id as usize].class_index;
                self.counter_times[counter][class].push(t);
                kernel.schedule(now, next, Some(id))?;
            }
            NodeKind::Capture {
                pool,
                units_per_class,
                next,
            } => {
                let id = entity.expect("capture needs an entity");
                let (pool, next) = (*pool, *next);
                let units = units_per_class[self.entities[id as usize].class_index];
                match self.pools[pool].request_capture(id, units, t)? {
                    CaptureOutcome::Granted => {
                        self.entities[id as usize].held = Some((pool, units));
                        self.traces[pool].record_grant(0.0);
                        kernel.schedule(now, next, Some(id))?;
                    }
                    CaptureOutcome::Queued { .. } => {
                        self.entities[id as usize].waiting_at = Some(node);
                    }
                }
                self.observe_pool(pool, t);
            }
            NodeKind::Task {
                phase,
                duration_per_class,
                next,
            } => {
                let id = entity.expect("task needs an entity");
                let (phase, next) = (*phase, *next);
                let law = duration_per_class[self.entities[id as usize].class_index].clone();
                let duration = law.sample(self.rng(id)).real().expect("duration law is continuous");
                self.entities[id as usize].open_visit = Some((phase, t));
                kernel.schedule_in(duration, next, Some(id))?;
            }
            NodeKind::Release {
                pool,
                units_per_class,
                next,
            } => {
                let id = entity.expect("release needs an entity");
                let (pool, next) = (*pool, *next);
                let e = &mut self.entities[id as usize];
                let units = units_per_class[e.class_index];
                debug_assert_eq!(e.held, Some((pool, units)));
                e.held = None;
                if let Some((phase, start)) = e.open_visit.take() {
                    e.phase_visits.push(PhaseVisit { phase, start, end: t });
                }
                let grants = self.pools[pool].release(units)?;
                kernel.schedule(now, next, Some(id))?;
                for grant in grants {
                    let waiter = &mut self.entities[grant.entity as usize];
                    let at = waiter.waiting_at.take().expect("granted entity was waiting");
                    waiter.held = Some((pool, grant.units));
                    self.traces[pool].record_grant(t - grant.enqueued_at);
                    let NodeKind::Capture { next: task, .. } = self.network.nodes[at] else {
                        unreachable!("entities only wait at capture nodes");
                    };
                    kernel.schedule(now, task, Some(grant.entity))?;
                }
                self.observe_pool(pool, t);
            }
            NodeKind::Branch {
                error_prob_per_class,
                on_error,
                on_ok,
            } => {
                let id = entity.expect("branch needs an entity");
                let q = error_prob_per_class[self.entities[id as usize].class_index];
                let (on_error, on_ok) = (*on_error, *on_ok);
                let target = match branch_decide(q, self.rng(id)) {
                    Outcome::Ok => on_ok,
                    Outcome::Error => {
                        let e = &mut self.entities[id as usize];
                        e.rework_count += 1;
                        if e.rework_count > MAX_REWORK {
                            return Err(WorkflowError::ReworkLimit { entity: id });
                        }
                        on_error
                    }
                };
                kernel.schedule(now, target, Some(id))?;
            }
            NodeKind::Sink => {
                let id = entity.expect("sink needs an entity");
                self.entities[id as usize].delivered_at = Some(t);
                self.entity_rngs[id as usize] = None;
                self.delivered += 1;
            }
        }
        Ok(())
    }

    /// Pool conservation: busy + free = capacity, busy equals the units held
    /// by entities, queued units equal the pending requests.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut held = vec![0u64; self.pools.len()];
        for e in &self.entities {
            if let Some((pool, units)) = e.held {
                held[pool] += u64::from(units);
            }
        }
        for (p, pool) in self.pools.iter().enumerate() {
            if pool.busy() > pool.capacity() {
                return Err(format!("pool `{}` busy {} > capacity", pool.name(), pool.busy()));
            }
            if pool.busy() + pool.free() != pool.capacity() {
                return Err(format!("pool `{}` busy + free ≠ capacity", pool.name()));
            }
            if held[p] != u64::from(pool.busy()) {
                return Err(format!(
                    "pool `{}` busy {} but entities hold {}",
                    pool.name(),
                    pool.busy(),
                    held[p]
                ));
            }
            let pending: u32 = pool.pending().map(|r| r.units).sum();
            if pending != pool.queued_units() {
                return Err(format!("pool `{}` queued units out of sync", pool.name()));
            }
        }
        Ok(())
    }

    fn finish(self, kernel: &Kernel, outcome: RunOutcome) -> Replication {
        let horizon = kernel.now().days();
        let pools = self
            .traces
            .into_iter()
            .zip(&self.pools)
            .map(|(trace, pool)| trace.finish(pool.name(), pool.capacity(), horizon))
            .collect();
        let received = self.network.received_counter;
        let delivered = self.network.delivered_counter;
        let counts = |c: usize| self.counter_times[c].iter().map(|ts| ts.len() as u64).collect();
        let stats = RunStats {
            replication: self.replication,
            config_fingerprint: self.fingerprint,
            class_names: self.class_names,
            received_per_class: counts(received),
            delivered_per_class: counts(delivered),
            arrival_times_per_class: self.counter_times[received].clone(),
            delivery_times_per_class: self.counter_times[delivered].clone(),
            pools,
            horizon,
            dispatches: kernel.dispatches(),
            in_system: self.emitted - self.delivered,
            rework_total: self.entities.iter().map(|e| e.rework_count).sum(),
            phase_visits_total: self.entities.iter().map(|e| e.phase_visits.len() as u64).sum(),
            trace_digest: kernel.trace_digest(),
        };
        Replication {
            stats,
            outcome,
            entities: self.entities,
            event_log: self.event_log,
        }
    }
}

impl Model for Simulation {
    type Error = WorkflowError;

    fn dispatch(&mut self, event: &Event, kernel: &mut Kernel) -> Result<(), WorkflowError> {
        if self.options.record_events {
            self.event_log.push((event.time, event.seq));
        }
        self.step_entity(event.entity, event.target, kernel)?;
        if self.options.check_invariants {
            self.check_invariants()
                .map_err(|what| WorkflowError::InvariantViolated {
                    time: event.time.days(),
                    what,
                })?;
        }
        Ok(())
    }

    fn delivered(&self) -> u64 {
        self.delivered
    }

    fn in_system(&self) -> u64 {
        self.emitted - self.delivered
    }

    fn blocked(&self) -> Vec<String> {
        self.pools
            .iter()
            .flat_map(|pool| {
                pool.pending().map(move |r| {
                    format!(
                        "pool `{}`: entity {} requests {} units (capacity {}, busy {}) since t={:.6}",
                        pool.name(),
                        r.entity,
                        r.units,
                        pool.capacity(),
                        pool.busy(),
                        r.enqueued_at
                    )
                })
            })
            .collect()
    }
}

/// Runs one replication to the scenario's stop condition.
pub fn simulate_with(
    config: &ScenarioConfig,
    master_seed: u64,
    replication: u64,
    options: SimulationOptions,
) -> Result<Replication, WorkflowError> {
    let mut sim = Simulation::new(config, master_seed, replication, options)?;
    let mut kernel = Kernel::new();
    sim.start(&mut kernel)?;
    let outcome = kernel.run(&mut sim, config.stop_condition())?;
    Ok(sim.finish(&kernel, outcome))
}

pub fn simulate(
    config: &ScenarioConfig,
    master_seed: u64,
    replication: u64,
) -> Result<Replication, WorkflowError> {
    simulate_with(config, master_seed, replication, SimulationOptions::default())
}

pub fn run_replication(
    config: &ScenarioConfig,
    master_seed: u64,
    replication: u64,
) -> Result<RunStats, WorkflowError> {
    simulate(config, master_seed, replication).map(|r| r.stats)
}

/// Replications `0..count`, returned in index order whether run serially or
/// in parallel. On failure the lowest-indexed error is reported.
pub fn run_replications(
    config: &ScenarioConfig,
    master_seed: u64,
    count: u64,
    parallel: bool,
) -> Result<Vec<RunStats>, WorkflowError> {
    run_replications_with(config, master_seed, count, parallel, SimulationOptions::default())
}

pub fn run_replications_with(
    config: &ScenarioConfig,
    master_seed: u64,
    count: u64,
    parallel: bool,
    options: SimulationOptions,
) -> Result<Vec<RunStats>, WorkflowError> {
    let one = |rep| simulate_with(config, master_seed, rep, options).map(|r| r.stats);
    if parallel {
        (0..count)
            .into_par_iter()
            .map(one)
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    } else {
        (0..count).map(one).collect()
    }
}
