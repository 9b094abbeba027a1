//! Sequential-prediction toolkit around a self-calibrating grid-walk
//! forecaster.
//!
//! The core primitive is a deterministic forecaster that walks on a fixed
//! grid of probability levels and is calibrated against arbitrary — even
//! adversarial — outcome sequences in `[0, 1]`. Around it the crate
//! provides:
//!
//! - [`calibrator`]: the grid-walk forecaster itself (levels, phases,
//!   transitions) and [`audit`]: edge-episode bookkeeping, conditional
//!   means per edge, bound-violation tracking and pointwise conditional
//!   means `r(z)`.
//! - [`predictors`]: base predictors (constant, moving average, AR(2)),
//!   the partition wrapper that unbiases any base predictor by running an
//!   independent calibrator per forecast cell, and a covariate-range
//!   extrapolation guard.
//! - [`sources`]: seeded outcome-sequence generators, including an
//!   adaptive adversary that observes the forecast before choosing the
//!   outcome.
//! - [`semisup`]: a one-dimensional semi-supervised generative model with
//!   pure-labelled intervals, spacing-based support reconstruction,
//!   classifiers over it, a PCA-preprocessing regression demo and a
//!   holdout selection guard.
//! - [`experiment`]: seeded, reproducible experiment runners with CSV
//!   output, driven by the `calwalk` CLI.
//!
//! All randomness flows through [`seeding`], so every run is a pure
//! function of its configuration and master seed.

pub mod audit;
pub mod calibrator;
pub mod experiment;
pub mod predictors;
pub mod seeding;
pub mod semisup;
pub mod session;
pub mod sources;

pub use audit::{conditional_mean, CalibrationAudit, EdgeRow, RStat, Theorem1Report};
pub use calibrator::{Calibrator, CalibratorError, EpisodeRecord, Exit, GridConfig};
pub use session::CalibrationSession;
