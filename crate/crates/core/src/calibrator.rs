//! The grid-walk forecaster.
//!
//! Forecasts live on the grid `xi_j = j/K` for `j = 0..=K`. The walker
//! holds one level per phase: the history that led to the current level
//! `phi` is given a fixed weight `T`, fresh outcomes accumulate into the
//! phase sum, and the phase ends as soon as the weighted mean
//!
//! ```text
//! (T * phi + sum of outcomes since the phase began) / (T + steps)
//! ```
//!
//! leaves the closed band `[phi - eta, phi + eta]`, where `eta = 1/(2K)`.
//! The walker then steps one grid level in the exit direction and starts
//! a new phase. Exits require the mean strictly outside the band, so a
//! constant outcome sitting exactly on the current level never triggers
//! a transition.
//!
//! Time starts at 1 when the calibrator is created; the k-th observed
//! outcome carries time index `k + 1`. A phase that began at time `t_i`
//! and ended with a transition at time `t_{i+1}` is recorded as an
//! episode covering times `t_i ..= t_{i+1} - 1`.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CalibratorError {
    #[error("levels_k must be at least 1")]
    ZeroLevels,
    #[error("inertia_t must be at least 1")]
    ZeroInertia,
    #[error("initial level {given} outside grid 0..={max}")]
    LevelOutOfRange { given: usize, max: usize },
    #[error("outcome {0} outside [0, 1]")]
    OutcomeOutOfRange(f64),
}

/// Forecast grid size and history weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    levels_k: usize,
    inertia_t: u64,
}

impl GridConfig {
    /// `levels_k` grid steps (so `levels_k + 1` forecast values) and a
    /// history weight `inertia_t`. The walk only behaves as intended when
    /// `inertia_t` is much larger than `levels_k`; smaller values are
    /// accepted but logged as a warning.
    pub fn new(levels_k: usize, inertia_t: u64) -> Result<Self, CalibratorError> {
        if levels_k == 0 {
            return Err(CalibratorError::ZeroLevels);
        }
        if inertia_t == 0 {
            return Err(CalibratorError::ZeroInertia);
        }
        if inertia_t < levels_k as u64 {
            log::warn!(
                "inertia_t = {inertia_t} is smaller than levels_k = {levels_k}; \
                 the walk is intended for inertia_t >> levels_k"
            );
        }
        Ok(Self { levels_k, inertia_t })
    }

    pub fn levels_k(&self) -> usize {
        self.levels_k
    }

    pub fn inertia_t(&self) -> u64 {
        self.inertia_t
    }

    /// Band half-width `eta = 1/(2K)`. Consecutive grid values differ by
    /// exactly `2 * eta`.
    pub fn eta(&self) -> f64 {
        1.0 / (2.0 * self.levels_k as f64)
    }

    /// Grid value `xi_j = j / K` of a level index.
    pub fn value(&self, level: usize) -> f64 {
        level as f64 / self.levels_k as f64
    }

    /// All grid values in increasing order.
    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.levels_k).map(|j| self.value(j))
    }

    /// Default starting level: the grid index nearest 1/2, ties broken
    /// downward. A centered start minimizes the worst-case initial walk.
    pub fn default_initial_level(&self) -> usize {
        self.levels_k / 2
    }

    /// The calibration bound `2/K + K/T` that well-visited edges satisfy
    /// eventually.
    pub fn calibration_bound(&self) -> f64 {
        2.0 / self.levels_k as f64 + self.levels_k as f64 / self.inertia_t as f64
    }
}

/// How an episode ended. `Open` only appears on the final, still-running
/// episode of a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Up,
    Down,
    Open,
}

impl Exit {
    pub fn as_str(&self) -> &'static str {
        match self {
            Exit::Up => "up",
            Exit::Down => "down",
            Exit::Open => "open",
        }
    }
}

/// One phase of the walk: the level held, the time range covered, and the
/// exit direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeRecord {
    /// Grid index of the level held during the episode.
    pub level: usize,
    /// First time index of the episode (`t_i`).
    pub start: u64,
    /// Last time index of the episode (`t_{i+1} - 1`). For an open
    /// episode this is the current time minus one and may be smaller than
    /// `start` right after a transition (empty so far).
    pub end: u64,
    pub exit: Exit,
}

impl EpisodeRecord {
    /// Edge index `j` in `1..=K` this episode belongs to once closed: a
    /// down-exit from level `j` lands in the edge's down set `A_j`, an
    /// up-exit from level `j - 1` in its up set `B_j`.
    pub fn edge(&self) -> Option<usize> {
        match self.exit {
            Exit::Down => Some(self.level),
            Exit::Up => Some(self.level + 1),
            Exit::Open => None,
        }
    }

    /// Number of time indices covered.
    pub fn len(&self) -> u64 {
        if self.end < self.start {
            0
        } else {
            self.end - self.start + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The walker state: current level, phase bookkeeping, and time.
#[derive(Debug, Clone)]
pub struct Calibrator {
    config: GridConfig,
    level: usize,
    phase_start: u64,
    phase_sum: f64,
    now: u64,
    episodes_closed: u64,
}

impl Calibrator {
    /// Creates a calibrator at time 1. `initial_level` defaults to the
    /// grid index nearest 1/2 (ties downward).
    pub fn new(config: GridConfig, initial_level: Option<usize>) -> Result<Self, CalibratorError> {
        let level = initial_level.unwrap_or_else(|| config.default_initial_level());
        if level > config.levels_k() {
            return Err(CalibratorError::LevelOutOfRange {
                given: level,
                max: config.levels_k(),
            });
        }
        Ok(Self {
            config,
            level,
            phase_start: 1,
            phase_sum: 0.0,
            now: 1,
            episodes_closed: 0,
        })
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    /// Current grid index.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Current time index; 1 at creation, incremented per outcome.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn phase_start(&self) -> u64 {
        self.phase_start
    }

    pub fn episodes_closed(&self) -> u64 {
        self.episodes_closed
    }

    /// The forecast for the next outcome: the current level's grid value.
    /// Pure; does not advance the walk.
    pub fn predict(&self) -> f64 {
        self.config.value(self.level)
    }

    /// The still-running episode.
    pub fn open_episode(&self) -> EpisodeRecord {
        EpisodeRecord {
            level: self.level,
            start: self.phase_start,
            end: self.now - 1,
            exit: Exit::Open,
        }
    }

    /// Weighted phase mean after the outcomes observed so far, or `None`
    /// right at a phase start (no outcomes in the phase yet).
    pub fn phase_mean(&self) -> Option<f64> {
        if self.now == self.phase_start {
            return None;
        }
        let t = self.config.inertia_t() as f64;
        Some(
            (t * self.predict() + self.phase_sum)
                / (self.config.inertia_t() + self.now - self.phase_start) as f64,
        )
    }

    /// Feeds the next outcome and advances time. Returns the closed
    /// episode when the weighted phase mean exits the band.
    pub fn observe(&mut self, z: f64) -> Result<Option<EpisodeRecord>, CalibratorError> {
        if !(0.0..=1.0).contains(&z) {
            return Err(CalibratorError::OutcomeOutOfRange(z));
        }
        self.phase_sum += z;
        self.now += 1;
        let phi = self.predict();
        let eta = self.config.eta();
        let weighted = (self.config.inertia_t() as f64 * phi + self.phase_sum)
            / (self.config.inertia_t() + self.now - self.phase_start) as f64;

        let exit = if weighted > phi + eta {
            Exit::Up
        } else if weighted < phi - eta {
            Exit::Down
        } else {
            return Ok(None);
        };

        let episode = EpisodeRecord {
            level: self.level,
            start: self.phase_start,
            end: self.now - 1,
            exit,
        };
        match exit {
            // Outcomes in [0, 1] make boundary exits arithmetically
            // impossible: at level 0 the weighted mean is nonnegative, at
            // level K it is at most 1.
            Exit::Up => {
                assert!(self.level < self.config.levels_k(), "up exit from top level");
                self.level += 1;
            }
            Exit::Down => {
                assert!(self.level > 0, "down exit from bottom level");
                self.level -= 1;
            }
            Exit::Open => unreachable!(),
        }
        self.phase_start = self.now;
        self.phase_sum = 0.0;
        self.episodes_closed += 1;
        Ok(Some(episode))
    }
}
