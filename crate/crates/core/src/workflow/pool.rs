use std::collections::VecDeque;

use thiserror::Error;

use crate::engine::EntityId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoolError {
    #[error("pool `{pool}`: request for {units} units exceeds capacity {capacity}")]
    UnitsExceedCapacity { pool: String, units: u32, capacity: u32 },
    #[error("pool `{pool}`: releasing {units} units but only {busy} are busy")]
    NegativeBusy { pool: String, units: u32, busy: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingRequest {
    pub entity: EntityId,
    pub units: u32,
    pub enqueued_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaptureOutcome {
    Granted,
    Queued { position: usize },
}

/// A request that left the queue on release.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grant {
    pub entity: EntityId,
    pub units: u32,
    pub enqueued_at: f64,
}

/// Integer-capacity pool with a strict FIFO queue.
///
/// Captures are all-or-nothing and the head of the queue blocks everything
/// behind it, even requests that would fit.
#[derive(Debug, Clone)]
pub struct ResourcePool {
    name: String,
    capacity: u32,
    busy: u32,
    pending: VecDeque<PendingRequest>,
    queued_units: u32,
    accept_oversize: bool,
}

impl ResourcePool {
    pub fn new(name: impl Into<String>, capacity: u32) -> Self {
        ResourcePool {
            name: name.into(),
            capacity,
            busy: 0,
            pending: VecDeque::new(),
            queued_units: 0,
            accept_oversize: false,
        }
    }

    /// Queue requests larger than the capacity instead of rejecting them.
    /// They can never be granted; used to exercise deadlock detection.
    pub fn accepting_oversize(mut self) -> Self {
        self.accept_oversize = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn busy(&self) -> u32 {
        self.busy
    }

    pub fn free(&self) -> u32 {
        self.capacity - self.busy
    }

    /// Sum of units requested by queued requests.
    pub fn queued_units(&self) -> u32 {
        self.queued_units
    }

    pub fn pending(&self) -> impl Iterator<Item = &PendingRequest> {
        self.pending.iter()
    }

    pub fn request_capture(
        &mut self,
        entity: EntityId,
        units: u32,
        now: f64,
    ) -> Result<CaptureOutcome, PoolError> {
        if units > self.capacity && !self.accept_oversize {
            return Err(PoolError::UnitsExceedCapacity {
                pool: self.name.clone(),
                units,
                capacity: self.capacity,
            });
        }
        if self.pending.is_empty() && self.free() >= units {
            self.busy += units;
            return Ok(CaptureOutcome::Granted);
        }
        self.pending.push_back(PendingRequest {
            entity,
            units,
            enqueued_at: now,
        });
        self.queued_units += units;
        Ok(CaptureOutcome::Queued {
            position: self.pending.len() - 1,
        })
    }

    /// Returns `units` and grants queued requests in order while the head fits.
    pub fn release(&mut self, units: u32) -> Result<Vec<Grant>, PoolError> {
        if units > self.busy {
            return Err(PoolError::NegativeBusy {
                pool: self.name.clone(),
                units,
                busy: self.busy,
            });
        }
        self.busy -= units;
        let mut grants = Vec::new();
        while let Some(head) = self.pending.front() {
            if head.units > self.free() {
                break;
            }
            let head = self.pending.pop_front().expect("peeked head");
            self.busy += head.units;
            self.queued_units -= head.units;
            grants.push(Grant {
                entity: head.entity,
                units: head.units,
                enqueued_at: head.enqueued_at,
            });
        }
        Ok(grants)
    }
}
