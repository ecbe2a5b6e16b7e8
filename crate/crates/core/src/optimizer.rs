//! Search for the smallest capacity vector that keeps delivery pace with arrivals.
//!
//! A candidate is *stable* when, over a batch of replications sharing the
//! same seeds, every project is delivered, deliveries are spaced no wider than
//! arrivals (up to a relative slack), and no pool makes requests wait longer
//! than a bound on average. The search starts at the feasibility lower bound,
//! grows the most congested pool until stable, then greedily removes units
//! until no single decrement stays stable.

use serde::Serialize;
use thiserror::Error;

use crate::engine::EngineError;
use crate::metrics::Summary;
use crate::scenario::{min_feasible_capacities, ScenarioConfig, ValidationIssue};
use crate::workflow::{run_replications, WorkflowError};

pub const DEFAULT_MAX_EVALUATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityCriterion {
    /// Allowed relative excess of the delivery gap over the arrival gap.
    pub epsilon: f64,
    /// Largest acceptable mean queue wait per pool, in days.
    pub max_wait: f64,
    pub replications: u64,
    pub projects_per_rep: u64,
}

impl Default for StabilityCriterion {
    fn default() -> Self {
        StabilityCriterion {
            epsilon: 0.05,
            max_wait: 1.0,
            replications: 20,
            projects_per_rep: 500,
        }
    }
}

impl StabilityCriterion {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidCriterion(m.to_string()));
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return bad("epsilon must be non-negative");
        }
        if self.max_wait.is_nan() || self.max_wait < 0.0 {
            return bad("max_wait must be non-negative");
        }
        if self.replications < 1 {
            return bad("replications must be at least 1");
        }
        if self.projects_per_rep < 10 {
            return bad("projects_per_rep must be at least 10");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizerError {
    #[error("invalid criterion: {0}")]
    InvalidCriterion(String),
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidScenario(Vec<ValidationIssue>),
    #[error("pool `{pool}` capacity {capacity} is below the feasible minimum {minimum}")]
    BelowMinimum {
        pool: String,
        capacity: u32,
        minimum: u32,
    },
    #[error("evaluation budget of {max_evaluations} capacity vectors exhausted without a stable vector")]
    BudgetExhausted {
        max_evaluations: usize,
        evaluations: Vec<Evaluation>,
    },
    #[error(transparent)]
    Simulation(#[from] WorkflowError),
}

/// Cross-replication means at one capacity vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationMetrics {
    pub delivered_all: bool,
    pub arrival_art: Option<f64>,
    pub delivery_art: Option<f64>,
    pub mean_wait: Vec<f64>,
    pub avg_busy: Vec<f64>,
    pub utilization: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub capacities: Vec<u32>,
    pub pass: bool,
    pub reasons: Vec<String>,
    /// Absent when a replication made no progress.
    pub metrics: Option<EvaluationMetrics>,
    pub simulated_projects: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub capacities: Vec<u32>,
    pub evaluations: Vec<Evaluation>,
    pub total_simulated_projects: u64,
}

impl OptimizationResult {
    /// The (cached) evaluation of the returned vector.
    pub fn optimum(&self) -> &Evaluation {
        self.evaluations
            .iter()
            .rev()
            .find(|e| e.capacities == self.capacities)
            .expect("optimum was evaluated")
    }
}

fn check_capacities(config: &ScenarioConfig, capacities: &[u32]) -> Result<(), OptimizerError> {
    assert_eq!(capacities.len(), config.pools.len(), "one capacity per pool");
    let minimum = min_feasible_capacities(config);
    for (p, (&c, &m)) in capacities.iter().zip(&minimum).enumerate() {
        if c < m {
            return Err(OptimizerError::BelowMinimum {
                pool: config.pools[p].name.clone(),
                capacity: c,
                minimum: m,
            });
        }
    }
    Ok(())
}

/// Runs `criterion.replications` replications of `config` at `capacities`
/// (replication streams `0..n` of `master_seed`) and judges stability.
pub fn is_stable(
    config: &ScenarioConfig,
    capacities: &[u32],
    criterion: &StabilityCriterion,
    master_seed: u64,
    parallel: bool,
) -> Result<Evaluation, OptimizerError> {
    criterion.validate()?;
    let issues = config.structural_issues();
    if !issues.is_empty() {
        return Err(OptimizerError::InvalidScenario(issues));
    }
    check_capacities(config, capacities)?;

    let candidate = config
        .with_capacities(capacities)
        .with_project_limit(criterion.projects_per_rep);
    let simulated_projects = criterion.replications * criterion.projects_per_rep;
    let runs = match run_replications(&candidate, master_seed, criterion.replications, parallel) {
        Ok(runs) => runs,
        Err(WorkflowError::Engine(err @ EngineError::NoProgress { .. })) => {
            return Ok(Evaluation {
                capacities: capacities.to_vec(),
                pass: false,
                reasons: vec![err.to_string()],
                metrics: None,
                simulated_projects,
            });
        }
        Err(other) => return Err(other.into()),
    };

    let pool_mean = |f: &dyn Fn(usize, &crate::metrics::RunStats) -> f64| -> Vec<f64> {
        (0..config.pools.len())
            .map(|p| Summary::of(runs.iter().map(|r| Some(f(p, r)))).mean.unwrap_or(0.0))
            .collect()
    };
    let metrics = EvaluationMetrics {
        delivered_all: runs
            .iter()
            .all(|r| r.delivered() == criterion.projects_per_rep && r.in_system == 0),
        arrival_art: Summary::of(runs.iter().map(|r| r.arrival_art())).mean,
        delivery_art: Summary::of(runs.iter().map(|r| r.delivery_art())).mean,
        mean_wait: pool_mean(&|p, r| r.pools[p].mean_wait()),
        avg_busy: pool_mean(&|p, r| r.pools[p].busy_integral / r.horizon),
        utilization: pool_mean(&|p, r| {
            let cap = r.pools[p].capacity;
            if cap == 0 {
                0.0
            } else {
                r.pools[p].busy_integral / r.horizon / f64::from(cap)
            }
        }),
    };

    let mut reasons = Vec::new();
    if !metrics.delivered_all {
        reasons.push("not every replication delivered all projects".to_string());
    }
    match (metrics.arrival_art, metrics.delivery_art) {
        (Some(arr), Some(del)) if del <= arr * (1.0 + criterion.epsilon) => {}
        (Some(arr), Some(del)) => reasons.push(format!(
            "delivery gap {del:.4} d exceeds arrival gap {arr:.4} d by more than {:.1}%",
            criterion.epsilon * 100.0
        )),
        _ => reasons.push("too few projects to compare delivery and arrival gaps".to_string()),
    }
    for (p, &wait) in metrics.mean_wait.iter().enumerate() {
        if wait > criterion.max_wait {
            reasons.push(format!(
                "pool `{}` mean queue wait {wait:.4} d exceeds {:.4} d",
                config.pools[p].name, criterion.max_wait
            ));
        }
    }
    Ok(Evaluation {
        capacities: capacities.to_vec(),
        pass: reasons.is_empty(),
        reasons,
        metrics: Some(metrics),
        simulated_projects,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    pub max_evaluations: usize,
    pub parallel: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            max_evaluations: DEFAULT_MAX_EVALUATIONS,
            parallel: false,
        }
    }
}

struct Search<'a> {
    config: &'a ScenarioConfig,
    criterion: &'a StabilityCriterion,
    master_seed: u64,
    options: OptimizeOptions,
    log: Vec<Evaluation>,
}

impl Search<'_> {
    fn evaluate(&mut self, capacities: &[u32]) -> Result<Evaluation, OptimizerError> {
        if let Some(e) = self.log.iter().find(|e| e.capacities == capacities) {
            return Ok(e.clone());
        }
        if self.log.len() >= self.options.max_evaluations {
            return Err(OptimizerError::BudgetExhausted {
                max_evaluations: self.options.max_evaluations,
                evaluations: std::mem::take(&mut self.log),
            });
        }
        let eval = is_stable(
            self.config,
            capacities,
            self.criterion,
            self.master_seed,
            self.options.parallel,
        )?;
        self.log.push(eval.clone());
        Ok(eval)
    }
}

/// Bottleneck-growth then greedy-shrink search. The result is stable and
/// locally minimal: no single pool can lose a unit without failing or
/// dropping below the feasibility bound.
pub fn optimize(
    config: &ScenarioConfig,
    criterion: &StabilityCriterion,
    master_seed: u64,
    options: OptimizeOptions,
) -> Result<OptimizationResult, OptimizerError> {
    criterion.validate()?;
    let issues = config.structural_issues();
    if !issues.is_empty() {
        return Err(OptimizerError::InvalidScenario(issues));
    }
    let minimum = min_feasible_capacities(config);
    let mut search = Search {
        config,
        criterion,
        master_seed,
        options,
        log: Vec::new(),
    };

    let mut capacities = minimum.clone();
    loop {
        let eval = search.evaluate(&capacities)?;
        if eval.pass {
            break;
        }
        let waits = eval
            .metrics
            .as_ref()
            .map(|m| m.mean_wait.clone())
            .unwrap_or_else(|| vec![0.0; capacities.len()]);
        let bottleneck = waits
            .iter()
            .enumerate()
            .fold(0, |best, (p, &w)| if w > waits[best] { p } else { best });
        capacities[bottleneck] += 1;
    }

    loop {
        let mut order: Vec<usize> = (0..capacities.len()).collect();
        order.sort_by(|&a, &b| capacities[b].cmp(&capacities[a]).then(a.cmp(&b)));
        let mut shrunk = false;
        for p in order {
            if capacities[p] <= minimum[p] {
                continue;
            }
            let mut candidate = capacities.clone();
            candidate[p] -= 1;
            if search.evaluate(&candidate)?.pass {
                capacities = candidate;
                shrunk = true;
                break;
            }
        }
        if !shrunk {
            break;
        }
    }

    let total_simulated_projects = search.log.iter().map(|e| e.simulated_projects).sum();
    Ok(OptimizationResult {
        capacities,
        evaluations: search.log,
        total_simulated_projects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_paper_scenario, PhaseSpec, PoolSpec, ProjectClass};
    use crate::stochastic::Distribution;

    fn quick() -> StabilityCriterion {
        StabilityCriterion {
            replications: 4,
            projects_per_rep: 100,
            ..Default::default()
        }
    }

    fn underloaded() -> ScenarioConfig {
        ScenarioConfig {
            pools: vec![PoolSpec {
                name: "crew".into(),
                capacity: 3,
            }],
            classes: vec![ProjectClass {
                name: "only".into(),
                probability: 1.0,
                error_prob: 0.0,
                demands: vec![1],
            }],
            phases: vec![PhaseSpec {
                name: "work".into(),
                pool: "crew".into(),
                duration_per_class: vec![Distribution::Uniform { min: 0.5, max: 1.0 }],
            }],
            arrival: Distribution::Triangular {
                min: 30.0,
                mode: 35.0,
                max: 40.0,
            },
            project_limit: 50,
            stop: None,
            seed: None,
            replications: None,
        }
    }

    #[test]
    fn criterion_bounds() {
        let mut c = StabilityCriterion::default();
        assert!(c.validate().is_ok());
        c.projects_per_rep = 9;
        assert!(c.validate().is_err());
    }

    #[test]
    fn below_minimum_is_rejected() {
        let config = build_paper_scenario();
        let err = is_stable(&config, &[5, 5, 9, 20, 5], &quick(), 1, false).unwrap_err();
        assert!(matches!(err, OptimizerError::BelowMinimum { ref pool, .. } if pool == "programmers"));
    }

    #[test]
    fn single_unit_suffices_when_underloaded() {
        let result = optimize(&underloaded(), &quick(), 42, OptimizeOptions::default()).unwrap();
        assert_eq!(result.capacities, vec![1]);
        assert!(result.optimum().pass);
    }

    #[test]
    fn overload_fails_on_queue_wait() {
        let mut config = build_paper_scenario();
        config.arrival = Distribution::triangular(3.0, 3.5, 4.0).unwrap();
        let eval = is_stable(&config, &config.capacities(), &quick(), 42, false).unwrap();
        assert!(!eval.pass);
        assert!(eval.reasons.iter().any(|r| r.contains("mean queue wait")), "{:?}", eval.reasons);
    }

    #[test]
    fn optimize_is_deterministic() {
        let a = optimize(&underloaded(), &quick(), 5, OptimizeOptions::default()).unwrap();
        let b = optimize(&underloaded(), &quick(), 5, OptimizeOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
