//! Random streams and the sampling laws used by scenarios.
//!
//! All continuous laws are sampled by inverse transform from a single uniform
//! variate `u` in `[0, 1)`, so every sampling rule can be checked against a
//! fixed `u` through [`Distribution::sample_unit`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StochasticError {
    #[error("invalid distribution: {0}")]
    Invalid(String),
    #[error("{op} is not supported for {kind} distributions")]
    Unsupported { op: &'static str, kind: &'static str },
}

/// Deterministic random stream.
///
/// Backed by ChaCha8. The 256-bit key is the little-endian concatenation of
/// `(master_seed, stream_id, substream, domain)`, so distinct
/// `(stream_id, substream)` pairs under one master seed always get distinct
/// keys and therefore independent keystreams. Replication streams use
/// `substream = 0, domain = 0`; per-entity substreams use `domain = 1`.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self::keyed(master_seed, stream_id, 0, 0)
    }

    /// An independent child stream, keyed by `substream` (e.g. an entity id).
    pub fn substream(&self, substream: u64) -> Self {
        Self::keyed(self.master_seed, self.stream_id, substream, 1)
    }

    fn keyed(master_seed: u64, stream_id: u64, substream: u64, domain: u64) -> Self {
        let mut key = [0u8; 32];
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([master_seed, stream_id, substream, domain])
        {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        RngStream {
            rng: ChaCha8Rng::from_seed(key),
            master_seed,
            stream_id,
        }
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform variate in `[0, 1)`.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

/// A parameterised sampling law.
///
/// Serialized as `{"type":"triangular","min":30,"mode":35,"max":40}`,
/// `{"type":"uniform","min":3,"max":5}`, `{"type":"categorical","weights":[..]}`
/// or `{"type":"bernoulli","p":0.1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Triangular { min: f64, mode: f64, max: f64 },
    Uniform { min: f64, max: f64 },
    Categorical { weights: Vec<f64> },
    Bernoulli { p: f64 },
}

/// Outcome of a draw: a real for continuous laws, an index for categorical,
/// a flag for Bernoulli.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    Real(f64),
    Index(usize),
    Flag(bool),
}

impl Sample {
    pub fn real(self) -> Option<f64> {
        match self {
            Sample::Real(x) => Some(x),
            _ => None,
        }
    }

    pub fn index(self) -> Option<usize> {
        match self {
            Sample::Index(i) => Some(i),
            _ => None,
        }
    }

    pub fn flag(self) -> Option<bool> {
        match self {
            Sample::Flag(b) => Some(b),
            _ => None,
        }
    }
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl Distribution {
    pub fn triangular(min: f64, mode: f64, max: f64) -> Result<Self, StochasticError> {
        let d = Distribution::Triangular { min, mode, max };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(min: f64, max: f64) -> Result<Self, StochasticError> {
        let d = Distribution::Uniform { min, max };
        d.validate()?;
        Ok(d)
    }

    pub fn categorical(weights: Vec<f64>) -> Result<Self, StochasticError> {
        let d = Distribution::Categorical { weights };
        d.validate()?;
        Ok(d)
    }

    pub fn bernoulli(p: f64) -> Result<Self, StochasticError> {
        let d = Distribution::Bernoulli { p };
        d.validate()?;
        Ok(d)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Distribution::Triangular { .. } => "triangular",
            Distribution::Uniform { .. } => "uniform",
            Distribution::Categorical { .. } => "categorical",
            Distribution::Bernoulli { .. } => "bernoulli",
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, Distribution::Triangular { .. } | Distribution::Uniform { .. })
    }

    pub fn validate(&self) -> Result<(), StochasticError> {
        let invalid = |msg: String| Err(StochasticError::Invalid(msg));
        match *self {
            Distribution::Triangular { min, mode, max } => {
                if ![min, mode, max].iter().all(|v| v.is_finite()) {
                    return invalid("triangular parameters must be finite".into());
                }
                if !(min <= mode && mode <= max && min < max) {
                    return invalid(format!(
                        "triangular requires min <= mode <= max and min < max, got ({min}, {mode}, {max})"
                    ));
                }
            }
            Distribution::Uniform { min, max } => {
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return invalid(format!("uniform requires min < max, got ({min}, {max})"));
                }
            }
            Distribution::Categorical { ref weights } => {
                if weights.is_empty() {
                    return invalid("categorical needs at least one weight".into());
                }
                if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                    return invalid(format!("categorical weight {w} outside [0, 1]"));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                    return invalid(format!("categorical weights sum to {sum}, not 1"));
                }
            }
            Distribution::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return invalid(format!("bernoulli p={p} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Maps a uniform variate `u` in `[0, 1)` to a draw.
    pub fn sample_unit(&self, u: f64) -> Sample {
        match *self {
            Distribution::Triangular { min, mode, max } => {
                let range = max - min;
                if u < (mode - min) / range {
                    Sample::Real(min + (u * range * (mode - min)).sqrt())
                } else {
                    Sample::Real(max - ((1.0 - u) * range * (max - mode)).sqrt())
                }
            }
            Distribution::Uniform { min, max } => Sample::Real(min + u * (max - min)),
            Distribution::Categorical { ref weights } => {
                // Half-open bins [cum_{i-1}, cum_i): a u on a boundary goes up.
                let mut cum = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    cum += w;
                    if u < cum {
                        return Sample::Index(i);
                    }
                }
                // Rounding can leave the last cumulative bound just below 1.
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1);
                Sample::Index(last)
            }
            Distribution::Bernoulli { p } => Sample::Flag(u < p),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Sample {
        self.sample_unit(rng.next_unit())
    }

    /// Density of a continuous law; zero outside the support.
    pub fn pdf(&self, x: f64) -> Result<f64, StochasticError> {
        match *self {
            Distribution::Triangular { min, mode, max } => {
                let range = max - min;
                let density = if x < min || x > max {
                    0.0
                } else if x < mode {
                    2.0 * (x - min) / (range * (mode - min))
                } else if x == mode {
                    2.0 / range
                } else {
                    2.0 * (max - x) / (range * (max - mode))
                };
                Ok(density)
            }
            Distribution::Uniform { min, max } => {
                Ok(if (min..=max).contains(&x) { 1.0 / (max - min) } else { 0.0 })
            }
            _ => Err(StochasticError::Unsupported {
                op: "pdf",
                kind: self.kind(),
            }),
        }
    }

    /// Closed-form `(mean, variance)` of a continuous law.
    pub fn moments(&self) -> Result<(f64, f64), StochasticError> {
        match *self {
            Distribution::Triangular { min: a, mode: c, max: b } => Ok((
                (a + b + c) / 3.0,
                (a * a + b * b + c * c - a * b - a * c - b * c) / 18.0,
            )),
            Distribution::Uniform { min, max } => {
                Ok(((min + max) / 2.0, (max - min).powi(2) / 12.0))
            }
            _ => Err(StochasticError::Unsupported {
                op: "moments",
                kind: self.kind(),
            }),
        }
    }

    pub fn mean(&self) -> Result<f64, StochasticError> {
        self.moments().map(|(m, _)| m)
    }

    /// Lower end of the support of a continuous law.
    pub fn support_min(&self) -> Option<f64> {
        match *self {
            Distribution::Triangular { min, .. } | Distribution::Uniform { min, .. } => Some(min),
            _ => None,
        }
    }
}
