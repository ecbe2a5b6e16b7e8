use crate::stochastic::{Distribution, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Error,
}

/// Where an entity goes after completing a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Phase(usize),
    Delivered,
}

/// Bernoulli error draw after a phase completes.
pub fn branch_decide(p_error: f64, rng: &mut RngStream) -> Outcome {
    let failed = Distribution::Bernoulli { p: p_error }
        .sample(rng)
        .flag()
        .expect("bernoulli yields a flag");
    if failed {
        Outcome::Error
    } else {
        Outcome::Ok
    }
}

/// Linear phase chain with one-step rework. Phases are 0-based; an error in
/// the first phase repeats it.
pub fn next_phase(current: usize, outcome: Outcome, phase_count: usize) -> Route {
    debug_assert!(current < phase_count);
    match outcome {
        Outcome::Ok if current + 1 == phase_count => Route::Delivered,
        Outcome::Ok => Route::Phase(current + 1),
        Outcome::Error => Route::Phase(current.saturating_sub(1)),
    }
}
