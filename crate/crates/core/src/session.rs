//! A full calibrated-forecasting run: walker, audit, and raw logs kept
//! together so the run can be replayed, exported, and checked.

use std::io::Write;

use crate::audit::{AuditError, CalibrationAudit, RStat, Theorem1Report};
use crate::calibrator::{Calibrator, CalibratorError, EpisodeRecord, GridConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Calibrator(#[from] CalibratorError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("csv write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Calibrator, audit and logs advancing in lockstep.
#[derive(Debug, Clone)]
pub struct CalibrationSession {
    calibrator: Calibrator,
    audit: CalibrationAudit,
    episodes: Vec<EpisodeRecord>,
    /// Forecast active when the i-th outcome arrived (time `i + 2`).
    forecasts: Vec<f64>,
    /// Outcome observed at time `i + 2`.
    outcomes: Vec<f64>,
}

impl CalibrationSession {
    pub fn new(config: GridConfig, initial_level: Option<usize>) -> Result<Self, SessionError> {
        Ok(Self {
            calibrator: Calibrator::new(config, initial_level)?,
            audit: CalibrationAudit::new(config),
            episodes: Vec::new(),
            forecasts: Vec::new(),
            outcomes: Vec::new(),
        })
    }

    pub fn config(&self) -> &GridConfig {
        self.calibrator.config()
    }

    pub fn predict(&self) -> f64 {
        self.calibrator.predict()
    }

    pub fn level(&self) -> usize {
        self.calibrator.level()
    }

    pub fn now(&self) -> u64 {
        self.calibrator.now()
    }

    /// Feeds one outcome through walker and audit. Returns the episode
    /// closed by this step, if any.
    pub fn step(&mut self, z: f64) -> Result<Option<EpisodeRecord>, SessionError> {
        let forecast_level = self.calibrator.level();
        let closed = self.calibrator.observe(z)?;
        self.forecasts.push(self.config().value(forecast_level));
        self.outcomes.push(z);
        self.audit.record_step(forecast_level, z);
        if let Some(episode) = closed {
            self.audit.record_episode(&episode, &self.outcomes)?;
            self.episodes.push(episode);
        }
        Ok(closed)
    }

    pub fn audit(&self) -> &CalibrationAudit {
        &self.audit
    }

    pub fn episodes(&self) -> &[EpisodeRecord] {
        &self.episodes
    }

    pub fn open_episode(&self) -> EpisodeRecord {
        self.calibrator.open_episode()
    }

    pub fn forecasts(&self) -> &[f64] {
        &self.forecasts
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn theorem1_report(&self, min_visits: u64) -> Theorem1Report {
        self.audit.theorem1_report(min_visits)
    }

    pub fn r_stat(&self, z: f64, eps: f64) -> Result<RStat, SessionError> {
        Ok(self.audit.r_stat(z, eps)?)
    }

    /// Cumulative squared forecast error over the run so far.
    pub fn squared_loss(&self) -> f64 {
        self.forecasts
            .iter()
            .zip(&self.outcomes)
            .map(|(f, y)| (f - y) * (f - y))
            .sum()
    }

    /// Per-edge calibration table as CSV.
    pub fn write_audit_csv<W: Write>(&self, w: &mut W, min_visits: u64) -> Result<(), SessionError> {
        writeln!(w, "j,xi_j,visits,edge_count,R_Tj,bound,violations")?;
        for row in &self.theorem1_report(min_visits).rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                row.edge,
                row.xi,
                row.visits,
                row.edge_count,
                row.r.map(|r| r.to_string()).unwrap_or_default(),
                row.bound,
                row.violations
            )?;
        }
        Ok(())
    }

    /// Episode log as CSV, the still-open episode last.
    pub fn write_episodes_csv<W: Write>(&self, w: &mut W) -> Result<(), SessionError> {
        writeln!(w, "episode_index,level,start,end,exit")?;
        for (i, ep) in self.episodes.iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", i, ep.level, ep.start, ep.end, ep.exit.as_str())?;
        }
        let open = self.open_episode();
        writeln!(
            w,
            "{},{},{},{},{}",
            self.episodes.len(),
            open.level,
            open.start,
            open.end,
            open.exit.as_str()
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrator::Exit;

    fn session(k: usize, t: u64, initial: Option<usize>) -> CalibrationSession {
        CalibrationSession::new(GridConfig::new(k, t).unwrap(), initial).unwrap()
    }

    #[test]
    fn step_keeps_walker_audit_and_logs_aligned() {
        let mut s = session(2, 4, Some(0));
        assert_eq!(s.step(1.0).unwrap(), None);
        let ep = s.step(1.0).unwrap().unwrap();
        assert_eq!(ep.exit, Exit::Up);
        assert_eq!(s.forecasts(), &[0.0, 0.0]);
        assert_eq!(s.outcomes(), &[1.0, 1.0]);
        assert_eq!(s.audit().now(), s.now());
        assert_eq!(s.episodes().len(), 1);
        // Episode covered times 1..=2; only time 2 carries an outcome.
        assert_eq!(s.audit().edge_count(1), 1);
        assert_eq!(s.audit().edge_mean(1), Some(1.0));
    }

    #[test]
    fn episode_partition_covers_every_time_once() {
        let mut s = session(3, 9, None);
        let pattern = [1.0, 0.9, 0.2, 0.0, 1.0, 0.7, 0.3, 0.5];
        for i in 0..500 {
            s.step(pattern[i % pattern.len()]).unwrap();
        }
        let mut covered = vec![false; s.now() as usize];
        let mut all: Vec<EpisodeRecord> = s.episodes().to_vec();
        all.push(s.open_episode());
        for ep in &all {
            for t in ep.start..=ep.end.min(s.now() - 1) {
                assert!(!covered[t as usize], "time {t} covered twice");
                covered[t as usize] = true;
            }
        }
        for t in 1..s.now() {
            assert!(covered[t as usize], "time {t} uncovered");
        }
    }

    #[test]
    fn audit_csv_has_expected_shape() {
        let mut s = session(2, 4, Some(0));
        s.step(1.0).unwrap();
        s.step(1.0).unwrap();
        let mut buf = Vec::new();
        s.write_audit_csv(&mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "j,xi_j,visits,edge_count,R_Tj,bound,violations");
        assert_eq!(lines.next().unwrap(), "1,0.5,0,1,1,1.5,0");
        assert_eq!(lines.next().unwrap(), "2,1,0,0,,1.5,0");
    }

    #[test]
    fn episode_csv_ends_with_open_episode() {
        let mut s = session(2, 4, Some(0));
        s.step(1.0).unwrap();
        s.step(1.0).unwrap();
        let mut buf = Vec::new();
        s.write_episodes_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "episode_index,level,start,end,exit");
        assert_eq!(lines[1], "0,0,1,2,up");
        assert_eq!(lines[2], "1,1,3,2,open");
    }
}
