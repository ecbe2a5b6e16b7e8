//! Process-network layer: resource pools, routing, and the simulation model
//! that drives entities through capture → task → release → branch per phase.

mod model;
mod network;
mod pool;
mod routing;

pub use model::{
    run_replication, run_replications, run_replications_with, simulate, simulate_with, Entity, PhaseVisit, Replication,
    Simulation, SimulationOptions, WorkflowError, MAX_REWORK,
};
pub use network::{Network, NodeKind};
pub use pool::{CaptureOutcome, Grant, PendingRequest, PoolError, ResourcePool};
pub use routing::{branch_decide, next_phase, Outcome, Route};
