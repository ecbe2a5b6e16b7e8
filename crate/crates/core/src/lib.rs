//! Deterministic discrete-event simulation of software projects moving
//! through resource-constrained Waterfall phases.
//!
//! - [`engine`]: clock, future-event list, dispatch loop.
//! - [`stochastic`]: seedable streams and sampling laws.
//! - [`workflow`]: pools with FIFO capture/release, routing, the model.
//! - [`scenario`]: JSON schema, validation, the built-in scenario.
//! - [`metrics`]: run statistics, reports, time series, analytic oracles.
//! - [`optimizer`]: minimal stable capacity search.

pub mod engine;
pub mod metrics;
pub mod optimizer;
pub mod scenario;
pub mod stochastic;
pub mod workflow;
