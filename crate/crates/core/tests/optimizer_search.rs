use sdlc_sim::optimizer::{is_stable, optimize, OptimizeOptions, OptimizerError, StabilityCriterion};
use sdlc_sim::scenario::{build_paper_scenario, min_feasible_capacities};
use sdlc_sim::stochastic::Distribution;

fn cheap() -> StabilityCriterion {
    StabilityCriterion {
        replications: 4,
        projects_per_rep: 150,
        ..Default::default()
    }
}

/// A heavier arrival stream, so the reference pool sizes are no longer enough.
fn busy_scenario() -> sdlc_sim::scenario::ScenarioConfig {
    let mut config = build_paper_scenario();
    config.arrival = Distribution::triangular(8.0, 10.0, 12.0).unwrap();
    config
}

#[test]
fn result_is_stable_and_locally_minimal() {
    let config = busy_scenario();
    let criterion = cheap();
    let options = OptimizeOptions {
        parallel: true,
        ..Default::default()
    };
    let result = optimize(&config, &criterion, 7, options).unwrap();
    let minimum = min_feasible_capacities(&config);
    assert!(result.optimum().pass);
    assert!(result.capacities.iter().zip(&minimum).all(|(c, m)| c >= m));
    // Re-evaluate every single-unit decrement independently of the search log.
    for p in 0..result.capacities.len() {
        if result.capacities[p] == minimum[p] {
            continue;
        }
        let mut smaller = result.capacities.clone();
        smaller[p] -= 1;
        assert!(!is_stable(&config, &smaller, &criterion, 7, true).unwrap().pass, "{smaller:?}");
    }
    let expected: u64 = result.evaluations.iter().map(|e| e.simulated_projects).sum();
    assert_eq!(result.total_simulated_projects, expected);
}

#[test]
fn extra_capacity_keeps_a_stable_vector_stable() {
    let config = busy_scenario();
    let criterion = cheap();
    let result = optimize(&config, &criterion, 11, OptimizeOptions { parallel: true, ..Default::default() }).unwrap();
    for p in 0..result.capacities.len() {
        let mut larger = result.capacities.clone();
        larger[p] += 2;
        assert!(is_stable(&config, &larger, &criterion, 11, true).unwrap().pass, "{larger:?}");
    }
}

#[test]
fn impossible_criterion_exhausts_the_budget() {
    let criterion = StabilityCriterion {
        epsilon: 0.0,
        max_wait: 0.0,
        replications: 2,
        projects_per_rep: 40,
    };
    let options = OptimizeOptions {
        max_evaluations: 30,
        parallel: false,
    };
    match optimize(&busy_scenario(), &criterion, 3, options) {
        Err(OptimizerError::BudgetExhausted {
            max_evaluations,
            evaluations,
        }) => {
            assert_eq!(max_evaluations, 30);
            assert_eq!(evaluations.len(), 30);
            assert!(evaluations.iter().all(|e| !e.pass));
        }
        other => panic!("expected budget exhaustion, got {other:?}"),
    }
}
