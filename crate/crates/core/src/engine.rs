//! Discrete-event kernel.
//!
//! The kernel owns the simulation clock and the future-event list. Events are
//! dispatched in `(time, seq)` order, where `seq` is a per-run insertion
//! counter, so two events scheduled for the same instant fire in the order they
//! were scheduled. Everything that happens *at* a node is delegated to a
//! [`Model`].

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a node in a model's process network.
pub type NodeId = usize;

/// Identifier of an entity (a project) flowing through the model.
pub type EntityId = u64;

/// Simulated time in days.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Returns `None` for negative or non-finite values.
    pub fn new(days: f64) -> Option<Self> {
        (days.is_finite() && days >= 0.0).then_some(SimTime(days))
    }

    #[inline]
    pub fn days(self) -> f64 {
        self.0
    }

    /// `self + delay`. Negative delays are a model bug.
    #[inline]
    pub fn after(self, delay: f64) -> SimTime {
        debug_assert!(delay >= 0.0, "negative delay {delay}");
        SimTime(self.0 + delay)
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}", self.0)
    }
}

/// A scheduled event: "at `time`, deliver `entity` (if any) to node `target`".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub entity: Option<EntityId>,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed so that `BinaryHeap` behaves as a min-heap.
        other
            .time
            .cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Handle returned by [`Kernel::schedule`], usable for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

/// When a run should halt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    AfterNProjectsDelivered(u64),
    AtTime(f64),
    EventListEmpty,
}

impl StopCondition {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            StopCondition::AfterNProjectsDelivered(0) => {
                Err("after_n_projects_delivered must be at least 1".to_string())
            }
            StopCondition::AtTime(t) if !(t.is_finite() && t >= 0.0) => {
                Err(format!("at_time must be a finite non-negative time, got {t}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// The requested stop condition held.
    StopConditionMet,
    /// The event list drained with nothing left in the system, before the
    /// stop condition held (e.g. fewer projects than requested were emitted).
    EventListDrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunOutcome {
    pub final_clock: SimTime,
    pub dispatches: u64,
    pub reason: TerminationReason,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("event scheduled in the past: t={requested} < clock={now}")]
    ScheduleInPast { now: SimTime, requested: SimTime },
    #[error("no progress: event list empty with {in_system} entities in system; blocked: {}", blocked.join("; "))]
    NoProgress {
        in_system: u64,
        blocked: Vec<String>,
    },
}

/// The behaviour bound to a kernel: what happens when an event reaches a node.
pub trait Model {
    type Error: From<EngineError>;

    fn dispatch(&mut self, event: &Event, kernel: &mut Kernel) -> Result<(), Self::Error>;

    /// Entities that have left the system through a sink.
    fn delivered(&self) -> u64;

    /// Entities created but not yet delivered.
    fn in_system(&self) -> u64;

    /// Human-readable descriptions of requests that are waiting on a resource.
    fn blocked(&self) -> Vec<String> {
        Vec::new()
    }
}

/// 64-bit FNV-1a accumulator, used for trace digests and config fingerprints.
#[derive(Debug, Clone, Copy)]
pub struct Fnv64(u64);

impl Default for Fnv64 {
    fn default() -> Self {
        Fnv64(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv64 {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Single-threaded event kernel: clock, future-event list and dispatch loop.
#[derive(Debug, Default)]
pub struct Kernel {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event>,
    cancelled: HashSet<u64>,
    dispatches: u64,
    digest: Fnv64,
}

impl Kernel {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn dispatches(&self) -> u64 {
        self.dispatches
    }

    /// Digest of every `(time, seq, target, entity)` dispatched so far.
    pub fn trace_digest(&self) -> u64 {
        self.digest.finish()
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(
        &mut self,
        time: SimTime,
        target: NodeId,
        entity: Option<EntityId>,
    ) -> Result<EventHandle, EngineError> {
        if time < self.clock {
            return Err(EngineError::ScheduleInPast {
                now: self.clock,
                requested: time,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event {
            time,
            seq,
            target,
            entity,
        });
        Ok(EventHandle(seq))
    }

    /// Schedules at `now + delay`.
    pub fn schedule_in(
        &mut self,
        delay: f64,
        target: NodeId,
        entity: Option<EntityId>,
    ) -> Result<EventHandle, EngineError> {
        self.schedule(self.clock.after(delay), target, entity)
    }

    /// Returns `false` if the event already fired or was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq || self.cancelled.contains(&handle.0) {
            return false;
        }
        if !self.queue.iter().any(|e| e.seq == handle.0) {
            return false;
        }
        self.cancelled.insert(handle.0)
    }

    fn next_live(&mut self) -> Option<&Event> {
        while let Some(head) = self.queue.peek() {
            if self.cancelled.remove(&head.seq) {
                self.queue.pop();
            } else {
                break;
            }
        }
        self.queue.peek()
    }

    /// Runs the dispatch loop until `stop` holds or the event list drains.
    pub fn run<M: Model>(&mut self, model: &mut M, stop: StopCondition) -> Result<RunOutcome, M::Error> {
        loop {
            if let StopCondition::AfterNProjectsDelivered(n) = stop {
                if model.delivered() >= n {
                    return Ok(self.outcome(TerminationReason::StopConditionMet));
                }
            }
            let next_time = self.next_live().map(|e| e.time);
            let Some(next_time) = next_time else {
                let in_system = model.in_system();
                if in_system > 0 {
                    return Err(EngineError::NoProgress {
                        in_system,
                        blocked: model.blocked(),
                    }
                    .into());
                }
                let reason = match stop {
                    StopCondition::EventListEmpty => TerminationReason::StopConditionMet,
                    _ => TerminationReason::EventListDrained,
                };
                return Ok(self.outcome(reason));
            };
            if let StopCondition::AtTime(limit) = stop {
                if next_time.days() > limit {
                    self.clock = SimTime(limit.max(self.clock.days()));
                    return Ok(self.outcome(TerminationReason::StopConditionMet));
                }
            }
            let event = self.queue.pop().expect("peeked event");
            debug_assert!(event.time >= self.clock);
            self.clock = event.time;
            self.dispatches += 1;
            self.digest.write_u64(event.time.days().to_bits());
            self.digest.write_u64(event.seq);
            self.digest.write_u64(event.target as u64);
            self.digest.write_u64(event.entity.unwrap_or(u64::MAX));
            model.dispatch(&event, self)?;
        }
    }

    fn outcome(&self, reason: TerminationReason) -> RunOutcome {
        RunOutcome {
            final_clock: self.clock,
            dispatches: self.dispatches,
            reason,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Records every dispatch; never delivers anything.
    #[derive(Default)]
    struct Recorder {
        seen: Vec<(f64, NodeId)>,
        stuck: u64,
    }

    impl Model for Recorder {
        type Error = EngineError;

        fn dispatch(&mut self, event: &Event, _kernel: &mut Kernel) -> Result<(), EngineError> {
            self.seen.push((event.time.days(), event.target));
            Ok(())
        }

        fn delivered(&self) -> u64 {
            0
        }

        fn in_system(&self) -> u64 {
            self.stuck
        }

        fn blocked(&self) -> Vec<String> {
            vec!["pool 'p': entity 0 requests 3 of capacity 2".into()]
        }
    }

    fn t(days: f64) -> SimTime {
        SimTime::new(days).unwrap()
    }

    #[test]
    fn single_event_fires_at_its_time() {
        let mut kernel = Kernel::new();
        let mut model = Recorder::default();
        kernel.schedule(t(5.0), 1, None).unwrap();
        let out = kernel.run(&mut model, StopCondition::EventListEmpty).unwrap();
        assert_eq!(model.seen, vec![(5.0, 1)]);
        assert_eq!(out.final_clock, t(5.0));
        assert_eq!(out.dispatches, 1);
        assert_eq!(out.reason, TerminationReason::StopConditionMet);
    }

    #[test]
    fn equal_times_dispatch_in_insertion_order() {
        let mut kernel = Kernel::new();
        let mut model = Recorder::default();
        kernel.schedule(t(7.0), 0xA, None).unwrap();
        kernel.schedule(t(7.0), 0xB, None).unwrap();
        kernel.schedule(t(3.0), 0xC, None).unwrap();
        kernel.run(&mut model, StopCondition::EventListEmpty).unwrap();
        assert_eq!(model.seen, vec![(3.0, 0xC), (7.0, 0xA), (7.0, 0xB)]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut kernel = Kernel::new();
        let mut model = Recorder::default();
        kernel.schedule(t(10.0), 0, None).unwrap();
        kernel.run(&mut model, StopCondition::EventListEmpty).unwrap();
        let err = kernel.schedule(t(9.0), 0, None).unwrap_err();
        assert!(matches!(err, EngineError::ScheduleInPast { .. }));
    }

    #[test]
    fn empty_run() {
        let mut kernel = Kernel::new();
        let out = kernel
            .run(&mut Recorder::default(), StopCondition::EventListEmpty)
            .unwrap();
        assert_eq!(out.final_clock, SimTime::ZERO);
        assert_eq!(out.dispatches, 0);
    }

    #[test]
    fn drained_list_with_entities_in_system_is_no_progress() {
        let mut kernel = Kernel::new();
        let mut model = Recorder {
            stuck: 1,
            ..Default::default()
        };
        let err = kernel
            .run(&mut model, StopCondition::AfterNProjectsDelivered(1))
            .unwrap_err();
        match err {
            EngineError::NoProgress { in_system, blocked } => {
                assert_eq!(in_system, 1);
                assert_eq!(blocked.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cancelled_events_never_fire() {
        let mut kernel = Kernel::new();
        let mut model = Recorder::default();
        let a = kernel.schedule(t(1.0), 1, None).unwrap();
        kernel.schedule(t(2.0), 2, None).unwrap();
        assert!(kernel.cancel(a));
        assert!(!kernel.cancel(a));
        assert_eq!(kernel.pending(), 1);
        kernel.run(&mut model, StopCondition::EventListEmpty).unwrap();
        assert_eq!(model.seen, vec![(2.0, 2)]);
        assert!(!kernel.cancel(a));
    }

    #[test]
    fn at_time_stops_before_later_events() {
        let mut kernel = Kernel::new();
        let mut model = Recorder::default();
        kernel.schedule(t(1.0), 1, None).unwrap();
        kernel.schedule(t(8.0), 2, None).unwrap();
        let out = kernel.run(&mut model, StopCondition::AtTime(5.0)).unwrap();
        assert_eq!(model.seen, vec![(1.0, 1)]);
        assert_eq!(out.final_clock, t(5.0));
        assert_eq!(out.reason, TerminationReason::StopConditionMet);
    }

    #[test]
    fn stop_condition_validation() {
        assert!(StopCondition::AfterNProjectsDelivered(0).validate().is_err());
        assert!(StopCondition::AtTime(-1.0).validate().is_err());
        assert!(StopCondition::AfterNProjectsDelivered(50).validate().is_ok());
    }

    #[test]
    fn sim_time_rejects_negative() {
        assert!(SimTime::new(-0.5).is_none());
        assert!(SimTime::new(f64::NAN).is_none());
    }
}
