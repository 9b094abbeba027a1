//! One-dimensional semi-supervised world: pure-labelled intervals
//! separated by gaps, both with exponential lengths.
//!
//! The generative model draws `K` interval lengths `u_i` (exponential,
//! mean `sigma`) and `K` gap lengths `v_i` (exponential, mean `tau`) and
//! tiles `[0, 1]` with them after normalizing by the grand total:
//! `b_i - a_i = u_i / (Σu + Σv)` and `a_{i+1} - b_i = v_i / (Σu + Σv)`,
//! with `v_K` spent as the leading gap before `a_1` so that `b_K = 1`
//! exactly and no draw is wasted. Each interval carries a fair-coin
//! label probability `p_i ∈ {0, 1}`, so labels are pure within an
//! interval. Covariates are uniform on the union of intervals; only the
//! first `n` of `N` observations come labelled.
//!
//! With many unlabeled points the support is recoverable from spacings:
//! within-interval spacings shrink like `log(N)/N` while gaps stay of
//! order `tau/K`, so cutting the sorted covariates at large spacings
//! reconstructs the intervals, and a single labelled point then labels an
//! entire reconstructed envelope.

pub mod pca;
pub mod select;

use std::io::Write;

use crate::seeding::{self, ProjectRng};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SemisupError {
    #[error("interval count must be at least 1")]
    ZeroIntervals,
    #[error("exponential means must be positive, got sigma = {sigma}, tau = {tau}")]
    InvalidMeans { sigma: f64, tau: f64 },
    #[error("draw vectors must have equal positive lengths")]
    MismatchedDraws,
    #[error("all interval and gap draws must be positive and finite")]
    NonPositiveDraw,
    #[error("label probabilities must be 0 or 1")]
    InvalidLabelProb,
    #[error("an interval degenerated to zero width in floating point")]
    DegenerateInterval,
    #[error("need 1 <= n_labeled <= n_total, got {n_labeled} of {n_total}")]
    BadSampleSplit { n_labeled: usize, n_total: usize },
    #[error("need at least 2 points to reconstruct, got {0}")]
    TooFewPoints(usize),
    #[error("covariates must be sorted ascending")]
    NotSorted,
    #[error("spacing threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
    #[error("query {0} outside [0, 1]")]
    QueryOutOfRange(f64),
    #[error("test size must be at least 1")]
    ZeroTestSize,
}

/// The realized generative model: interval bounds and label
/// probabilities.
#[derive(Debug, Clone)]
pub struct SemiSupModel {
    a: Vec<f64>,
    b: Vec<f64>,
    p: Vec<u8>,
    /// Cumulative interval lengths, `cum[j]` = total length before
    /// interval `j`; last entry is the full support measure.
    cum: Vec<f64>,
}

impl SemiSupModel {
    /// Draws a model: `k` interval lengths (exponential, mean `sigma`),
    /// `k` gap lengths (exponential, mean `tau`), then `k` fair-coin
    /// label probabilities, in that order.
    pub fn sample(k: usize, sigma: f64, tau: f64, seed: u64) -> Result<Self, SemisupError> {
        if k == 0 {
            return Err(SemisupError::ZeroIntervals);
        }
        if !(sigma > 0.0) || !(tau > 0.0) {
            return Err(SemisupError::InvalidMeans { sigma, tau });
        }
        let mut rng = seeding::rng(seed, &[]);
        let exp_u = Exp::new(1.0 / sigma).expect("positive rate");
        let exp_v = Exp::new(1.0 / tau).expect("positive rate");
        let u: Vec<f64> = (0..k).map(|_| exp_u.sample(&mut rng)).collect();
        let v: Vec<f64> = (0..k).map(|_| exp_v.sample(&mut rng)).collect();
        let p: Vec<u8> = (0..k).map(|_| if rng.random::<f64>() < 0.5 { 0 } else { 1 }).collect();
        Self::from_draws(u, v, p)
    }

    /// Builds the model from explicit draws. The last gap draw becomes
    /// the leading gap `a_1`, so the pieces tile `[0, 1]` exactly.
    pub fn from_draws(u: Vec<f64>, v: Vec<f64>, p: Vec<u8>) -> Result<Self, SemisupError> {
        let k = u.len();
        if k == 0 || v.len() != k || p.len() != k {
            return Err(SemisupError::MismatchedDraws);
        }
        if u.iter().chain(&v).any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(SemisupError::NonPositiveDraw);
        }
        if p.iter().any(|&y| y > 1) {
            return Err(SemisupError::InvalidLabelProb);
        }
        let total: f64 = u.iter().sum::<f64>() + v.iter().sum::<f64>();
        let mut a = Vec::with_capacity(k);
        let mut b = Vec::with_capacity(k);
        let mut cursor = v[k - 1] / total;
        for j in 0..k {
            a.push(cursor);
            cursor += u[j] / total;
            b.push(cursor);
            if j + 1 < k {
                cursor += v[j] / total;
            }
        }
        // The construction sums to 1 up to rounding; pin the endpoint.
        b[k - 1] = 1.0;
        for j in 0..k {
            if !(a[j] < b[j]) || (j > 0 && !(b[j - 1] < a[j])) {
                return Err(SemisupError::DegenerateInterval);
            }
        }
        let mut cum = Vec::with_capacity(k + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for j in 0..k {
            acc += b[j] - a[j];
            cum.push(acc);
        }
        Ok(Self { a, b, p, cum })
    }

    pub fn intervals(&self) -> usize {
        self.a.len()
    }

    /// `(a_j, b_j)` of interval `j` (0-based).
    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.a[j], self.b[j])
    }

    pub fn label_prob(&self, j: usize) -> u8 {
        self.p[j]
    }

    /// Total interval measure `Σ (b_j - a_j)`.
    pub fn support_measure(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Smallest gap between consecutive intervals.
    pub fn min_gap(&self) -> f64 {
        (1..self.a.len())
            .map(|j| self.a[j] - self.b[j - 1])
            .fold(f64::INFINITY, f64::min)
    }

    /// Interval containing `x`, if any.
    pub fn interval_of(&self, x: f64) -> Option<usize> {
        let idx = self.a.partition_point(|&av| av <= x);
        if idx == 0 {
            return None;
        }
        let j = idx - 1;
        (x <= self.b[j]).then_some(j)
    }

    /// One covariate, uniform on the union of intervals.
    pub fn sample_x(&self, rng: &mut ProjectRng) -> f64 {
        let r = rng.random::<f64>() * self.support_measure();
        let j = self.cum.partition_point(|&c| c <= r).saturating_sub(1).min(self.a.len() - 1);
        self.a[j] + (r - self.cum[j])
    }

    /// One labelled draw `(x, y)` with `y = p_{j(x)}`.
    pub fn sample_pair(&self, rng: &mut ProjectRng) -> (f64, u8) {
        let x = self.sample_x(rng);
        let j = self.interval_of(x).expect("sampled covariates lie in an interval");
        (x, self.p[j])
    }

    /// Interval table export: `(j, a_j, b_j, p_j)` rows.
    pub fn write_intervals_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "j,a_j,b_j,p_j")?;
        for j in 0..self.intervals() {
            writeln!(w, "{},{},{},{}", j + 1, self.a[j], self.b[j], self.p[j])?;
        }
        Ok(())
    }
}

/// A partially labelled sample from the model.
#[derive(Debug, Clone)]
pub struct DataSet {
    pub labeled: Vec<(f64, u8)>,
    pub unlabeled: Vec<f64>,
}

/// Draws `n_total` covariates, labelling the first `n_labeled`.
pub fn sample_dataset(
    model: &SemiSupModel,
    n_labeled: usize,
    n_total: usize,
    seed: u64,
) -> Result<DataSet, SemisupError> {
    if n_labeled == 0 || n_labeled > n_total {
        return Err(SemisupError::BadSampleSplit { n_labeled, n_total });
    }
    let mut rng = seeding::rng(seed, &[]);
    let labeled = (0..n_labeled).map(|_| model.sample_pair(&mut rng)).collect();
    let unlabeled = (0..n_total - n_labeled).map(|_| model.sample_x(&mut rng)).collect();
    Ok(DataSet { labeled, unlabeled })
}

impl DataSet {
    /// Data export: `(x, y)` rows with `y` blank for unlabeled points.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "x,y")?;
        for (x, y) in &self.labeled {
            writeln!(w, "{},{}", x, y)?;
        }
        for x in &self.unlabeled {
            writeln!(w, "{},", x)?;
        }
        Ok(())
    }
}

/// Default spacing cutoff `4 log(N) / N` for `N` sorted points: a few
/// times the expected largest within-interval spacing.
pub fn default_spacing_threshold(n_points: usize) -> f64 {
    4.0 * (n_points as f64).ln() / n_points as f64
}

/// Detected support: disjoint envelopes `[A_j, B_j]`, each spanning the
/// covariates between two large spacings.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportReconstruction {
    envelopes: Vec<(f64, f64)>,
    threshold: f64,
}

/// Cuts the sorted covariates at every spacing above `threshold`.
pub fn reconstruct_support(
    xs: &[f64],
    threshold: f64,
) -> Result<SupportReconstruction, SemisupError> {
    if xs.len() < 2 {
        return Err(SemisupError::TooFewPoints(xs.len()));
    }
    if !(threshold > 0.0) {
        return Err(SemisupError::NonPositiveThreshold(threshold));
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(SemisupError::NotSorted);
    }
    let mut envelopes = Vec::new();
    let mut lo = xs[0];
    let mut hi = xs[0];
    for &x in &xs[1..] {
        if x - hi > threshold {
            envelopes.push((lo, hi));
            lo = x;
        }
        hi = x;
    }
    envelopes.push((lo, hi));
    Ok(SupportReconstruction { envelopes, threshold })
}

/// Threshold-free variant: cuts at the largest multiplicative jump in
/// the sorted spacing sequence, the natural split between within-interval
/// spacings and gaps.
pub fn reconstruct_support_auto(xs: &[f64]) -> Result<SupportReconstruction, SemisupError> {
    if xs.len() < 2 {
        return Err(SemisupError::TooFewPoints(xs.len()));
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(SemisupError::NotSorted);
    }
    let mut spacings: Vec<f64> =
        xs.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).collect();
    spacings.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let mut best_ratio = 1.0;
    let mut threshold = f64::INFINITY;
    for w in spacings.windows(2) {
        let ratio = w[1] / w[0];
        if ratio > best_ratio {
            best_ratio = ratio;
            threshold = (w[0] * w[1]).sqrt();
        }
    }
    if threshold.is_finite() {
        reconstruct_support(xs, threshold)
    } else {
        // No positive spacings at all: a single degenerate envelope.
        Ok(SupportReconstruction { envelopes: vec![(xs[0], *xs.last().unwrap())], threshold })
    }
}

impl SupportReconstruction {
    pub fn envelopes(&self) -> &[(f64, f64)] {
        &self.envelopes
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Envelope containing `x`, if any (bounds inclusive).
    pub fn envelope_of(&self, x: f64) -> Option<usize> {
        let idx = self.envelopes.partition_point(|&(lo, _)| lo <= x);
        if idx == 0 {
            return None;
        }
        let j = idx - 1;
        (x <= self.envelopes[j].1).then_some(j)
    }

    /// Detected-to-true length ratio `Σ (B_j - A_j) / Σ (b_j - a_j)`.
    pub fn coverage(&self, model: &SemiSupModel) -> f64 {
        let detected: f64 = self.envelopes.iter().map(|&(lo, hi)| hi - lo).sum();
        detected / model.support_measure()
    }
}

/// A classifier output: a hard label or the abstention value 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Zero,
    One,
    Abstain,
}

impl Prediction {
    pub fn from_label(y: u8) -> Self {
        if y == 0 {
            Prediction::Zero
        } else {
            Prediction::One
        }
    }

    /// Numeric value: 0, 1, or the abstention 1/2.
    pub fn value(self) -> f64 {
        match self {
            Prediction::Zero => 0.0,
            Prediction::One => 1.0,
            Prediction::Abstain => 0.5,
        }
    }

    /// Zero-one loss, with abstentions scored as 1/2 — the expected
    /// zero-one loss of a fair coin.
    pub fn loss(self, truth: u8) -> f64 {
        match self {
            Prediction::Abstain => 0.5,
            Prediction::Zero if truth == 0 => 0.0,
            Prediction::One if truth == 1 => 0.0,
            _ => 1.0,
        }
    }
}

/// Which data a classifier may consult.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifyMode {
    /// Label the envelope of `x` by the first labelled point sharing it;
    /// abstain when no labelled point does or `x` falls outside every
    /// envelope.
    Combined,
    /// Nearest labelled neighbour, ignoring the unlabeled data.
    LabeledOnly,
    /// The unlabeled data alone say nothing about labels: always 1/2.
    UnlabeledOnly,
}

pub(crate) fn combined_predict(
    labeled: &[(f64, u8)],
    reconstruction: &SupportReconstruction,
    x: f64,
) -> Prediction {
    let Some(envelope) = reconstruction.envelope_of(x) else {
        return Prediction::Abstain;
    };
    labeled
        .iter()
        .find(|(xi, _)| reconstruction.envelope_of(*xi) == Some(envelope))
        .map(|&(_, y)| Prediction::from_label(y))
        .unwrap_or(Prediction::Abstain)
}

pub(crate) fn nearest_label_predict(labeled: &[(f64, u8)], x: f64) -> Prediction {
    labeled
        .iter()
        .min_by(|(x1, _), (x2, _)| (x1 - x).abs().partial_cmp(&(x2 - x).abs()).unwrap())
        .map(|&(_, y)| Prediction::from_label(y))
        .unwrap_or(Prediction::Abstain)
}

/// Classifies `x` under the given mode. `reconstruction` must come from
/// the dataset's unlabeled portion for the combined mode to mean
/// anything.
pub fn classify(
    dataset: &DataSet,
    reconstruction: &SupportReconstruction,
    mode: ClassifyMode,
    x: f64,
) -> Result<Prediction, SemisupError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(SemisupError::QueryOutOfRange(x));
    }
    Ok(match mode {
        ClassifyMode::Combined => combined_predict(&dataset.labeled, reconstruction, x),
        ClassifyMode::LabeledOnly => nearest_label_predict(&dataset.labeled, x),
        ClassifyMode::UnlabeledOnly => Prediction::Abstain,
    })
}

/// The unbeatable reference: true intervals and true label
/// probabilities.
pub fn classify_oracle(model: &SemiSupModel, x: f64) -> Prediction {
    model
        .interval_of(x)
        .map(|j| Prediction::from_label(model.label_prob(j)))
        .unwrap_or(Prediction::Abstain)
}

/// Monte-Carlo misclassification risk of a rule on fresh draws from the
/// model, abstentions scored 1/2.
pub fn estimate_risk<F: FnMut(f64) -> Prediction>(
    model: &SemiSupModel,
    n_test: usize,
    seed: u64,
    mut rule: F,
) -> Result<f64, SemisupError> {
    if n_test == 0 {
        return Err(SemisupError::ZeroTestSize);
    }
    let mut rng = seeding::rng(seed, &[]);
    let mut total = 0.0;
    for _ in 0..n_test {
        let (x, y) = model.sample_pair(&mut rng);
        total += rule(x).loss(y);
    }
    Ok(total / n_test as f64)
}
