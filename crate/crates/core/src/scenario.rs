//! Scenario schema, loader/validator and the built-in Waterfall scenario.
//!
//! A scenario is a single JSON document:
//!
//! ```json
//! {
//!   "pools":   [{"name": "analysts", "capacity": 5}, ...],
//!   "classes": [{"name": "small", "probability": 0.7, "error_prob": 0.1,
//!                "demands": [1, 1, 2, 2, 1]}, ...],
//!   "phases":  [{"name": "analysis", "pool": "analysts",
//!                "duration_per_class": [{"type": "uniform", "min": 3, "max": 5}, ...]}, ...],
//!   "arrival": {"type": "triangular", "min": 30, "mode": 35, "max": 40},
//!   "project_limit": 50,
//!   "seed": 42,
//!   "replications": 5
//! }
//! ```
//!
//! `demands[i]` is the number of units of phase `i`'s pool a project of that
//! class captures while in phase `i`. `stop`, `seed` and `replications` are
//! optional.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::{Fnv64, StopCondition};
use crate::stochastic::Distribution;

const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub name: String,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectClass {
    pub name: String,
    pub probability: f64,
    /// Probability that a completed phase is found faulty and the project
    /// falls back one phase.
    pub error_prob: f64,
    /// Units captured in each phase, indexed like `ScenarioConfig::phases`.
    pub demands: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSpec {
    pub name: String,
    pub pool: String,
    pub duration_per_class: Vec<Distribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub pools: Vec<PoolSpec>,
    pub classes: Vec<ProjectClass>,
    pub phases: Vec<PhaseSpec>,
    pub arrival: Distribution,
    pub project_limit: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replications: Option<u32>,
}

/// One violated invariant, located by a field path such as `classes[2].demands[3]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Validation(Vec<ValidationIssue>),
    #[error("unknown parameter path `{0}`")]
    UnknownParameter(String),
}

fn issue(path: impl Into<String>, reason: impl Into<String>) -> ValidationIssue {
    ValidationIssue {
        path: path.into(),
        reason: reason.into(),
    }
}

/// The Waterfall software house: five single-role pools, three project scales.
pub fn build_paper_scenario() -> ScenarioConfig {
    let pools = [
        ("analysts", 5),
        ("designers", 5),
        ("programmers", 10),
        ("testers", 20),
        ("maintenance", 5),
    ];
    let classes = [
        ("small", 0.70, 0.1, [1, 1, 2, 2, 1]),
        ("medium", 0.25, 0.2, [2, 2, 4, 6, 2]),
        ("large", 0.05, 0.3, [5, 5, 10, 20, 5]),
    ];
    let phases = [
        ("analysis", "analysts", 3.0, 5.0),
        ("design", "designers", 5.0, 10.0),
        ("implementation", "programmers", 15.0, 20.0),
        ("testing", "testers", 5.0, 10.0),
        ("maintenance", "maintenance", 1.0, 3.0),
    ];
    ScenarioConfig {
        pools: pools
            .iter()
            .map(|&(name, capacity)| PoolSpec {
                name: name.to_string(),
                capacity,
            })
            .collect(),
        classes: classes
            .iter()
            .map(|&(name, probability, error_prob, demands)| ProjectClass {
                name: name.to_string(),
                probability,
                error_prob,
                demands: demands.to_vec(),
            })
            .collect(),
        phases: phases
            .iter()
            .map(|&(name, pool, min, max)| PhaseSpec {
                name: name.to_string(),
                pool: pool.to_string(),
                duration_per_class: vec![Distribution::Uniform { min, max }; classes.len()],
            })
            .collect(),
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

/// Parses and fully validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let config = load_scenario_unchecked(text)?;
    config.validate().map_err(ScenarioError::Validation)?;
    Ok(config)
}

/// Parses a scenario without semantic validation.
///
/// Used to force infeasible configurations into the simulator (which then
/// reports no-progress instead of refusing to start).
pub fn load_scenario_unchecked(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    from_value(value)
}

fn from_value(value: Value) -> Result<ScenarioConfig, ScenarioError> {
    let issues = integer_field_issues(&value);
    if !issues.is_empty() {
        return Err(ScenarioError::Validation(issues));
    }
    serde_json::from_value(value).map_err(|e| ScenarioError::Parse(e.to_string()))
}

/// Signed or fractional numbers in unsigned integer fields are reported as
/// validation errors with a path, rather than as opaque type errors.
fn integer_field_issues(doc: &Value) -> Vec<ValidationIssue> {
    fn check(v: Option<&Value>, path: String, out: &mut Vec<ValidationIssue>) {
        if let Some(Value::Number(n)) = v {
            if n.as_u64().is_none() {
                out.push(issue(path, format!("must be a non-negative integer, got {n}")));
            }
        }
    }
    let mut out = Vec::new();
    if let Some(Value::Array(pools)) = doc.get("pools") {
        for (i, p) in pools.iter().enumerate() {
            check(p.get("capacity"), format!("pools[{i}].capacity"), &mut out);
        }
    }
    if let Some(Value::Array(classes)) = doc.get("classes") {
        for (i, c) in classes.iter().enumerate() {
            if let Some(Value::Array(demands)) = c.get("demands") {
                for (j, d) in demands.iter().enumerate() {
                    check(Some(d), format!("classes[{i}].demands[{j}]"), &mut out);
                }
            }
        }
    }
    for key in ["project_limit", "seed", "replications"] {
        check(doc.get(key), key.to_string(), &mut out);
    }
    out
}

impl ScenarioConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn pool_index(&self, name: &str) -> Option<usize> {
        self.pools.iter().position(|p| p.name == name)
    }

    /// Pool index used by each phase. Panics on an unknown pool; call on
    /// validated configs only.
    pub fn phase_pools(&self) -> Vec<usize> {
        self.phases
            .iter()
            .map(|ph| {
                self.pool_index(&ph.pool)
                    .unwrap_or_else(|| panic!("phase `{}` uses unknown pool `{}`", ph.name, ph.pool))
            })
            .collect()
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.pools.iter().map(|p| p.capacity).collect()
    }

    /// Class mix as a categorical law.
    pub fn mix(&self) -> Distribution {
        Distribution::Categorical {
            weights: self.classes.iter().map(|c| c.probability).collect(),
        }
    }

    pub fn stop_condition(&self) -> StopCondition {
        self.stop
            .unwrap_or(StopCondition::AfterNProjectsDelivered(self.project_limit))
    }

    pub fn with_capacities(&self, capacities: &[u32]) -> ScenarioConfig {
        assert_eq!(capacities.len(), self.pools.len(), "capacity vector length");
        let mut out = self.clone();
        for (pool, &c) in out.pools.iter_mut().zip(capacities) {
            pool.capacity = c;
        }
        out
    }

    /// Sets the project limit and resets the stop condition to "all delivered".
    pub fn with_project_limit(&self, project_limit: u64) -> ScenarioConfig {
        let mut out = self.clone();
        out.project_limit = project_limit;
        out.stop = None;
        out
    }

    /// Stable 64-bit fingerprint of the serialized config.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write(serde_json::to_string(self).expect("scenario serializes").as_bytes());
        h.finish()
    }

    /// Checks every invariant; all violations are returned, not just the first.
    pub fn validate(&self) -> Result<(), Vec<ValidationIssue>> {
        let mut out = self.structural_issues();
        out.extend(self.feasibility_issues());
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Requests that can never be granted because they exceed the pool.
    pub fn feasibility_issues(&self) -> Vec<ValidationIssue> {
        let mut out = Vec::new();
        for (j, ph) in self.phases.iter().enumerate() {
            let Some(pool) = self.pool_index(&ph.pool) else { continue };
            let capacity = self.pools[pool].capacity;
            for (i, c) in self.classes.iter().enumerate() {
                if let Some(&d) = c.demands.get(j) {
                    if d > capacity {
                        out.push(issue(
                            format!("classes[{i}].demands[{j}]"),
                            format!(
                                "demand {d} exceeds pool `{}` capacity {capacity}: demand exceeds pool capacity (deadlock)",
                                ph.pool
                            ),
                        ));
                    }
                }
            }
        }
        out
    }

    /// Everything except capacity feasibility: shapes, references, laws.
    pub fn structural_issues(&self) -> Vec<ValidationIssue> {
        let mut out = Vec::new();

        if self.pools.is_empty() {
            out.push(issue("pools", "at least one pool is required"));
        }
        for (i, p) in self.pools.iter().enumerate() {
            if self.pools[..i].iter().any(|q| q.name == p.name) {
                out.push(issue(format!("pools[{i}].name"), format!("duplicate pool `{}`", p.name)));
            }
        }

        if self.phases.is_empty() {
            out.push(issue("phases", "phase list is empty"));
        }
        if self.classes.is_empty() {
            out.push(issue("classes", "at least one project class is required"));
        }

        let mut sum = 0.0;
        for (i, c) in self.classes.iter().enumerate() {
            sum += c.probability;
            if !(0.0..=1.0).contains(&c.probability) {
                out.push(issue(
                    format!("classes[{i}].probability"),
                    format!("{} outside [0, 1]", c.probability),
                ));
            }
            if !(0.0..1.0).contains(&c.error_prob) {
                out.push(issue(
                    format!("classes[{i}].error_prob"),
                    format!("{} outside [0, 1)", c.error_prob),
                ));
            }
            if c.demands.len() != self.phases.len() {
                out.push(issue(
                    format!("classes[{i}].demands"),
                    format!("expected {} entries (one per phase), got {}", self.phases.len(), c.demands.len()),
                ));
            }
            for (j, &d) in c.demands.iter().enumerate() {
                if d == 0 {
                    out.push(issue(format!("classes[{i}].demands[{j}]"), "demand must be at least 1"));
                }
            }
        }
        if !self.classes.is_empty() && (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            out.push(issue(
                "classes[].probability",
                format!("sum {} ≠ 1", (sum * 1e9).round() / 1e9),
            ));
        }

        for (j, ph) in self.phases.iter().enumerate() {
            let pool = self.pool_index(&ph.pool);
            if pool.is_none() {
                out.push(issue(format!("phases[{j}].pool"), format!("unknown pool `{}`", ph.pool)));
            }
            if ph.duration_per_class.len() != self.classes.len() {
                out.push(issue(
                    format!("phases[{j}].duration_per_class"),
                    format!(
                        "expected {} entries (one per class), got {}",
                        self.classes.len(),
                        ph.duration_per_class.len()
                    ),
                ));
            }
            for (k, d) in ph.duration_per_class.iter().enumerate() {
                let path = format!("phases[{j}].duration_per_class[{k}]");
                check_time_law(d, &path, &mut out);
            }
        }

        check_time_law(&self.arrival, "arrival", &mut out);
        if self.project_limit == 0 {
            out.push(issue("project_limit", "must be at least 1"));
        }
        if let Some(stop) = &self.stop {
            if let Err(e) = stop.validate() {
                out.push(issue("stop", e));
            }
        }
        if self.replications == Some(0) {
            out.push(issue("replications", "must be at least 1"));
        }
        out
    }

    /// Returns a copy with the numeric field at `path` set to `value`, then
    /// re-validated.
    ///
    /// Path segments are object keys, array indices, or (inside arrays of named
    /// items) item names: `pools.programmers.capacity`, `classes.0.error_prob`,
    /// `arrival.mode`, `project_limit`.
    pub fn with_parameter(&self, path: &str, value: f64) -> Result<ScenarioConfig, ScenarioError> {
        let mut doc = serde_json::to_value(self).expect("scenario serializes");
        let unknown = || ScenarioError::UnknownParameter(path.to_string());
        let mut cursor = &mut doc;
        for segment in path.split('.') {
            cursor = match cursor {
                Value::Object(map) => map.get_mut(segment).ok_or_else(unknown)?,
                Value::Array(items) => {
                    let idx = match segment.parse::<usize>() {
                        Ok(idx) => idx,
                        Err(_) => items
                            .iter()
                            .position(|item| item.get("name").and_then(Value::as_str) == Some(segment))
                            .ok_or_else(unknown)?,
                    };
                    items.get_mut(idx).ok_or_else(unknown)?
                }
                _ => return Err(unknown()),
            };
        }
        if !cursor.is_number() {
            return Err(unknown());
        }
        *cursor = if value.fract() == 0.0 && value >= 0.0 && value < 2f64.powi(53) {
            Value::from(value as u64)
        } else {
            Value::from(value)
        };
        let config = from_value(doc)?;
        config.validate().map_err(ScenarioError::Validation)?;
        Ok(config)
    }
}

fn check_time_law(d: &Distribution, path: &str, out: &mut Vec<ValidationIssue>) {
    if !d.is_continuous() {
        out.push(issue(path, format!("must be triangular or uniform, got {}", d.kind())));
    } else if let Err(e) = d.validate() {
        out.push(issue(path, e.to_string()));
    } else if d.support_min().unwrap_or(0.0) < 0.0 {
        out.push(issue(path, "times must be non-negative"));
    }
}

/// Per pool, the largest single request any (class, phase) makes on it; zero
/// for pools no phase uses. Any smaller capacity deadlocks.
pub fn min_feasible_capacities(config: &ScenarioConfig) -> Vec<u32> {
    let mut mins = vec![0; config.pools.len()];
    for (j, phase) in config.phases.iter().enumerate() {
        let Some(pool) = config.pool_index(&phase.pool) else { continue };
        for class in &config.classes {
            if let Some(&d) = class.demands.get(j) {
                mins[pool] = mins[pool].max(d);
            }
        }
    }
    mins
}
