//! Calibration bookkeeping for a grid-walk run.
//!
//! Each closed episode belongs to exactly one edge `j` between grid
//! levels `xi_{j-1}` and `xi_j`: down-exits from `xi_j` form the edge's
//! down set `A_j`, up-exits from `xi_{j-1}` its up set `B_j`. The audit
//! maintains the running conditional mean `R_tj` of outcomes over times
//! in `A_j ∪ B_j`, flags the times where `|R_tj - xi_j|` exceeds the
//! bound `2/K + K/T`, and keeps per-level sufficient statistics from
//! which the pointwise conditional mean `r(z)` can be answered for any
//! probe and half-width.
//!
//! Times with a pending (open) episode are not attributed to any edge
//! until the episode closes, so `R_tj` is piecewise constant between
//! transitions and never looks into the future.

use crate::calibrator::{EpisodeRecord, Exit, GridConfig};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AuditError {
    #[error("cannot record an open episode")]
    OpenEpisode,
    #[error("episode level {level} outside grid 0..={max}")]
    EpisodeOutOfGrid { level: usize, max: usize },
    #[error("episode covers time {time} but only {available} outcomes were supplied")]
    MissingOutcomes { time: u64, available: usize },
    #[error("probe half-width must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("forecast/outcome logs differ in length ({forecasts} vs {outcomes})")]
    LogLengthMismatch { forecasts: usize, outcomes: usize },
}

/// Conditional mean of outcomes over a forecast neighbourhood, or
/// `Empty` when no forecast fell in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RStat {
    Empty,
    Mean(f64),
}

impl RStat {
    pub fn mean(self) -> Option<f64> {
        match self {
            RStat::Empty => None,
            RStat::Mean(m) => Some(m),
        }
    }
}

/// Pointwise conditional mean `r(z)` computed straight from raw logs:
/// the average outcome over steps whose forecast fell within `eps` of
/// `z`. `forecasts[i]` and `outcomes[i]` describe the same step.
pub fn conditional_mean(
    forecasts: &[f64],
    outcomes: &[f64],
    z: f64,
    eps: f64,
) -> Result<RStat, AuditError> {
    if !(eps > 0.0) {
        return Err(AuditError::NonPositiveEps(eps));
    }
    if forecasts.len() != outcomes.len() {
        return Err(AuditError::LogLengthMismatch {
            forecasts: forecasts.len(),
            outcomes: outcomes.len(),
        });
    }
    let mut sum = 0.0;
    let mut count = 0u64;
    for (&f, &y) in forecasts.iter().zip(outcomes) {
        if (f - z).abs() < eps {
            sum += y;
            count += 1;
        }
    }
    Ok(if count == 0 { RStat::Empty } else { RStat::Mean(sum / count as f64) })
}

/// Piecewise-constant violation status of one edge, stored as closed
/// time intervals. Status only changes when the edge's episode set
/// changes, so the interval list stays short.
#[derive(Debug, Clone, Default)]
struct ViolationTrack {
    closed: Vec<(u64, u64)>,
    open_from: Option<u64>,
}

impl ViolationTrack {
    fn set(&mut self, violating: bool, time: u64) {
        match (self.open_from, violating) {
            (None, true) => self.open_from = Some(time),
            (Some(from), false) => {
                if time > from {
                    self.closed.push((from, time - 1));
                }
                self.open_from = None;
            }
            _ => {}
        }
    }

    /// Violating steps within `[from, to]`, treating a still-open stretch
    /// as running through `to`.
    fn count_in(&self, from: u64, to: u64) -> u64 {
        if to < from {
            return 0;
        }
        let mut total = 0;
        for &(a, b) in &self.closed {
            let lo = a.max(from);
            let hi = b.min(to);
            if hi >= lo {
                total += hi - lo + 1;
            }
        }
        if let Some(a) = self.open_from {
            let lo = a.max(from);
            if to >= lo {
                total += to - lo + 1;
            }
        }
        total
    }

    fn intervals_in(&self, from: u64, to: u64) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for &(a, b) in &self.closed {
            let lo = a.max(from);
            let hi = b.min(to);
            if hi >= lo {
                out.push((lo, hi));
            }
        }
        if let Some(a) = self.open_from {
            let lo = a.max(from);
            if to >= lo {
                out.push((lo, to));
            }
        }
        out
    }
}

/// One row of the per-edge calibration table.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRow {
    /// Edge index `j` in `1..=K`.
    pub edge: usize,
    /// Grid value `xi_j`.
    pub xi: f64,
    /// Steps whose forecast sat at level `j`.
    pub visits: u64,
    /// Times attributed to `A_j ∪ B_j` so far.
    pub edge_count: u64,
    /// Running conditional mean `R_tj`; `None` while the edge is empty.
    pub r: Option<f64>,
    /// The bound `2/K + K/T`.
    pub bound: f64,
    /// Steps at which `|R_tj - xi_j|` exceeded the bound.
    pub violations: u64,
    /// Whether `visits` fell short of the report's `min_visits`.
    pub rarely_visited: bool,
}

/// Deterministic summary of the audit state at the current time.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    pub rows: Vec<EdgeRow>,
    pub now: u64,
    pub min_visits: u64,
}

impl Theorem1Report {
    /// Rows that the calibration claim is asserted for: visited at least
    /// `min_visits` times. The rarely-visited rest fall under the "level
    /// held finitely often" alternative.
    pub fn asserted_rows(&self) -> impl Iterator<Item = &EdgeRow> {
        self.rows.iter().filter(|r| !r.rarely_visited)
    }
}

/// Running calibration audit. Feed it one `record_step` per outcome and
/// one `record_episode` per closed episode, in time order.
#[derive(Debug, Clone)]
pub struct CalibrationAudit {
    grid: GridConfig,
    /// Per level 0..=K: steps the forecast sat there and the summed
    /// outcomes at those steps. Forecasts only ever take grid values, so
    /// these are sufficient statistics for any pointwise r(z) probe.
    level_counts: Vec<u64>,
    level_sums: Vec<f64>,
    /// Per edge 1..=K (index 0 unused).
    edge_counts: Vec<u64>,
    edge_sums: Vec<f64>,
    violations: Vec<ViolationTrack>,
    now: u64,
}

impl CalibrationAudit {
    pub fn new(grid: GridConfig) -> Self {
        let k = grid.levels_k();
        Self {
            grid,
            level_counts: vec![0; k + 1],
            level_sums: vec![0.0; k + 1],
            edge_counts: vec![0; k + 1],
            edge_sums: vec![0.0; k + 1],
            violations: vec![ViolationTrack::default(); k + 1],
            now: 1,
        }
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    /// Current time; advances with each recorded step.
    pub fn now(&self) -> u64 {
        self.now
    }

    /// Records one step: the forecast level active when `outcome`
    /// arrived.
    pub fn record_step(&mut self, level: usize, outcome: f64) {
        debug_assert!(level < self.level_counts.len());
        self.level_counts[level] += 1;
        self.level_sums[level] += outcome;
        self.now += 1;
    }

    /// Attributes a closed episode's times to its edge and refreshes the
    /// edge's violation status.
    ///
    /// `outcomes` is the full arrival-ordered outcome log of the run: the
    /// outcome observed at time `t` sits at index `t - 2` (time 1 is the
    /// creation instant and carries no outcome). Call after the
    /// `record_step` for the transition-triggering outcome.
    pub fn record_episode(
        &mut self,
        episode: &EpisodeRecord,
        outcomes: &[f64],
    ) -> Result<(), AuditError> {
        let edge = episode.edge().ok_or(AuditError::OpenEpisode)?;
        if edge == 0 || edge > self.grid.levels_k() {
            return Err(AuditError::EpisodeOutOfGrid {
                level: episode.level,
                max: self.grid.levels_k(),
            });
        }
        if episode.end >= 2 && (episode.end - 2) as usize >= outcomes.len() {
            return Err(AuditError::MissingOutcomes {
                time: episode.end,
                available: outcomes.len(),
            });
        }
        for t in episode.start.max(2)..=episode.end {
            self.edge_sums[edge] += outcomes[(t - 2) as usize];
            self.edge_counts[edge] += 1;
        }
        self.refresh_violation(edge);
        Ok(())
    }

    fn refresh_violation(&mut self, edge: usize) {
        let violating = match self.edge_mean(edge) {
            Some(r) => (r - self.grid.value(edge)).abs() > self.grid.calibration_bound(),
            None => false,
        };
        self.violations[edge].set(violating, self.now);
    }

    /// Steps the forecast spent at a grid level.
    pub fn level_visits(&self, level: usize) -> u64 {
        self.level_counts[level]
    }

    /// Times attributed to edge `j`'s episode sets so far.
    pub fn edge_count(&self, edge: usize) -> u64 {
        self.edge_counts[edge]
    }

    /// Running `R_tj` for edge `j`, `None` while the edge is empty.
    pub fn edge_mean(&self, edge: usize) -> Option<f64> {
        if self.edge_counts[edge] == 0 {
            None
        } else {
            Some(self.edge_sums[edge] / self.edge_counts[edge] as f64)
        }
    }

    /// Violating steps of one edge within `[from, to]`.
    pub fn edge_violations_in(&self, edge: usize, from: u64, to: u64) -> u64 {
        self.violations[edge].count_in(from, to)
    }

    /// Steps in `[from, to]` at which at least one nonempty edge violated
    /// the bound.
    pub fn violation_steps_in(&self, from: u64, to: u64) -> u64 {
        let mut intervals: Vec<(u64, u64)> = self
            .violations
            .iter()
            .flat_map(|v| v.intervals_in(from, to))
            .collect();
        intervals.sort_unstable();
        let mut total = 0;
        let mut cursor: Option<(u64, u64)> = None;
        for (a, b) in intervals {
            match cursor {
                Some((lo, hi)) if a <= hi + 1 => cursor = Some((lo, hi.max(b))),
                Some((lo, hi)) => {
                    total += hi - lo + 1;
                    cursor = Some((a, b));
                }
                None => cursor = Some((a, b)),
            }
        }
        if let Some((lo, hi)) = cursor {
            total += hi - lo + 1;
        }
        total
    }

    /// Pointwise conditional mean `r(z)`: the average outcome over steps
    /// whose forecast fell within `eps` of the probe `z`. Exact for any
    /// probe because forecasts only take grid values.
    pub fn r_stat(&self, z: f64, eps: f64) -> Result<RStat, AuditError> {
        if !(eps > 0.0) {
            return Err(AuditError::NonPositiveEps(eps));
        }
        let mut sum = 0.0;
        let mut count = 0u64;
        for level in 0..=self.grid.levels_k() {
            if (self.grid.value(level) - z).abs() < eps {
                sum += self.level_sums[level];
                count += self.level_counts[level];
            }
        }
        Ok(if count == 0 { RStat::Empty } else { RStat::Mean(sum / count as f64) })
    }

    /// Per-edge table at the current time. Edges whose level was held
    /// fewer than `min_visits` steps are flagged rarely visited.
    pub fn theorem1_report(&self, min_visits: u64) -> Theorem1Report {
        let rows = (1..=self.grid.levels_k())
            .map(|edge| {
                let visits = self.level_counts[edge];
                EdgeRow {
                    edge,
                    xi: self.grid.value(edge),
                    visits,
                    edge_count: self.edge_counts[edge],
                    r: self.edge_mean(edge),
                    bound: self.grid.calibration_bound(),
                    violations: self.violations[edge].count_in(1, self.now),
                    rarely_visited: visits < min_visits,
                }
            })
            .collect();
        Theorem1Report { rows, now: self.now, min_visits }
    }

    /// Merges another audit of the same grid into this one. Sums and
    /// counts add; violation logs are dropped because interval times of
    /// independent runs are not comparable.
    pub fn merge_counts(&mut self, other: &CalibrationAudit) {
        assert_eq!(self.grid, other.grid, "audits must share a grid");
        for i in 0..self.level_counts.len() {
            self.level_counts[i] += other.level_counts[i];
            self.level_sums[i] += other.level_sums[i];
            self.edge_counts[i] += other.edge_counts[i];
            self.edge_sums[i] += other.edge_sums[i];
        }
    }
}
