//! Outcome-sequence generators for sequential-prediction experiments.
//!
//! Stochastic sources draw from a fixed law; the adaptive adversary
//! instead observes the forecaster's upcoming prediction and returns the
//! outcome that contradicts it hardest. Every source is deterministic
//! given its spec and seed, and every emitted outcome lies in `[0, 1]`.

use crate::seeding::{self, ProjectRng};
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("beta shape parameters must be positive, got ({alpha}, {beta})")]
    InvalidBeta { alpha: f64, beta: f64 },
    #[error("noise scale must be nonnegative, got {0}")]
    NegativeNoise(f64),
    #[error("start value {0} outside [0, 1]")]
    StartOutOfRange(f64),
    #[error("regime means must lie in [0, 1], got ({mean_a}, {mean_b})")]
    InvalidRegimeMeans { mean_a: f64, mean_b: f64 },
    #[error("switch probability {0} outside [0, 1]")]
    InvalidSwitchProb(f64),
    #[error("the adaptive adversary needs the upcoming forecast")]
    AdversaryNeedsForecast,
    #[error("stream horizon must be at least 1")]
    ZeroHorizon,
}

fn default_start() -> f64 {
    0.5
}

/// Serializable description of an outcome source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceSpec {
    /// Independent uniform draws on [0, 1).
    IidUniform,
    /// Independent Beta(alpha, beta) draws.
    IidBeta { alpha: f64, beta: f64 },
    /// Two-lag linear recursion with Gaussian noise, clamped to [0, 1].
    /// `start` seeds the missing history; with `noise = 0` the stream is
    /// the plain recursion and consumes no randomness.
    Ar2Clamped {
        beta1: f64,
        beta2: f64,
        noise: f64,
        #[serde(default)]
        intercept: f64,
        #[serde(default = "default_start")]
        start: f64,
    },
    /// Bernoulli outcomes whose success probability flips between two
    /// regimes with the given per-step switch probability.
    RegimeSwitch { mean_a: f64, mean_b: f64, switch_prob: f64 },
    /// Returns 1 when the forecast is at most 1/2 and 0 otherwise — the
    /// outcome that contradicts the forecast hardest, ties going up.
    AdaptiveAdversary,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<(), SourceError> {
        match *self {
            SourceSpec::IidUniform | SourceSpec::AdaptiveAdversary => Ok(()),
            SourceSpec::IidBeta { alpha, beta } => {
                if alpha > 0.0 && beta > 0.0 {
                    Ok(())
                } else {
                    Err(SourceError::InvalidBeta { alpha, beta })
                }
            }
            SourceSpec::Ar2Clamped { noise, start, .. } => {
                if noise < 0.0 {
                    return Err(SourceError::NegativeNoise(noise));
                }
                if !(0.0..=1.0).contains(&start) {
                    return Err(SourceError::StartOutOfRange(start));
                }
                Ok(())
            }
            SourceSpec::RegimeSwitch { mean_a, mean_b, switch_prob } => {
                if !(0.0..=1.0).contains(&mean_a) || !(0.0..=1.0).contains(&mean_b) {
                    return Err(SourceError::InvalidRegimeMeans { mean_a, mean_b });
                }
                if !(0.0..=1.0).contains(&switch_prob) {
                    return Err(SourceError::InvalidSwitchProb(switch_prob));
                }
                Ok(())
            }
        }
    }

    /// Whether `next_outcome` requires the upcoming forecast.
    pub fn is_adaptive(&self) -> bool {
        matches!(self, SourceSpec::AdaptiveAdversary)
    }
}

/// A seeded source instance.
#[derive(Debug, Clone)]
pub struct SequenceSource {
    spec: SourceSpec,
    rng: ProjectRng,
    in_regime_b: bool,
}

impl SequenceSource {
    pub fn new(spec: SourceSpec, seed: u64) -> Result<Self, SourceError> {
        spec.validate()?;
        Ok(Self { spec, rng: seeding::rng(seed, &[]), in_regime_b: false })
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    /// Next outcome given the emitted history and, for the adversary, the
    /// forecaster's upcoming prediction. Stochastic variants ignore the
    /// forecast.
    pub fn next_outcome(
        &mut self,
        history: &[f64],
        forecast: Option<f64>,
    ) -> Result<f64, SourceError> {
        let z = match self.spec {
            SourceSpec::IidUniform => self.rng.random::<f64>(),
            SourceSpec::IidBeta { alpha, beta } => {
                // Parameters were validated at construction.
                Beta::new(alpha, beta)
                    .map_err(|_| SourceError::InvalidBeta { alpha, beta })?
                    .sample(&mut self.rng)
            }
            SourceSpec::Ar2Clamped { beta1, beta2, noise, intercept, start } => {
                let y1 = history.last().copied().unwrap_or(start);
                let y2 = if history.len() >= 2 { history[history.len() - 2] } else { start };
                let mut v = intercept + beta1 * y1 + beta2 * y2;
                if noise > 0.0 {
                    let normal = Normal::new(0.0, noise).expect("validated noise scale");
                    v += normal.sample(&mut self.rng);
                }
                v
            }
            SourceSpec::RegimeSwitch { mean_a, mean_b, switch_prob } => {
                if self.rng.random::<f64>() < switch_prob {
                    self.in_regime_b = !self.in_regime_b;
                }
                let mean = if self.in_regime_b { mean_b } else { mean_a };
                if self.rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            SourceSpec::AdaptiveAdversary => {
                let f = forecast.ok_or(SourceError::AdversaryNeedsForecast)?;
                if f <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        Ok(z.clamp(0.0, 1.0))
    }
}

/// A bounded outcome stream that keeps its own emitted history, so
/// recursive sources need no external bookkeeping. Adversarial streams
/// co-evolve with the forecaster through the `forecast` argument of
/// [`OutcomeStream::next_with`].
#[derive(Debug, Clone)]
pub struct OutcomeStream {
    source: SequenceSource,
    horizon: u64,
    history: Vec<f64>,
}

/// Builds a stream of `horizon` outcomes for `(spec, seed)`.
pub fn make_stream(spec: &SourceSpec, horizon: u64, seed: u64) -> Result<OutcomeStream, SourceError> {
    if horizon == 0 {
        return Err(SourceError::ZeroHorizon);
    }
    Ok(OutcomeStream { source: SequenceSource::new(spec.clone(), seed)?, horizon, history: Vec::new() })
}

impl OutcomeStream {
    /// Emits the next outcome, or `None` once the horizon is exhausted.
    pub fn next_with(&mut self, forecast: Option<f64>) -> Result<Option<f64>, SourceError> {
        if self.history.len() as u64 >= self.horizon {
            return Ok(None);
        }
        let z = self.source.next_outcome(&self.history, forecast)?;
        self.history.push(z);
        Ok(Some(z))
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Stream export: one `(t, outcome)` row per emitted outcome.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,outcome")?;
        for (i, z) in self.history.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, z)?;
        }
        Ok(())
    }
}
