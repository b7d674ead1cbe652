//! Conditional distributions over ordinal attribute scales.
//!
//! Attributes are the integers `1..=n`. Representativeness of an attribute
//! is the likelihood ratio `p(a | target) / p(a | reference)`; it is only
//! ever computed on add-one smoothed distributions so the denominator is
//! strictly positive.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `sum(probs) == 1` for a valid distribution.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("a scale needs at least 2 attributes, got {0}")]
    InvalidScale(usize),
    #[error("scale has {expected} attributes but {got} labels were given")]
    LabelCount { expected: usize, got: usize },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("cannot build an empirical distribution from zero responses")]
    EmptyCounts,
    #[error("scale mismatch: {left} vs {right} attributes")]
    ScaleMismatch { left: usize, right: usize },
    #[error("representativeness requires smoothed (strictly positive) distributions")]
    UnsmoothedInput,
    #[error("right-tail size must be in 1..={n}, got {got}")]
    InvalidN { n: usize, got: usize },
    #[error("attribute {value} outside scale 1..={n}")]
    OutOfRange { value: i64, n: usize },
}

/// Which pole of the scale belongs to the target group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    HigherIsTarget,
    LowerIsTarget,
}

/// An ordinal (Likert) attribute set `{1, ..., n}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeScale {
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
    #[serde(default)]
    direction: Direction,
}

impl AttributeScale {
    pub fn new(n: usize) -> Result<Self, DistError> {
        if n < 2 {
            return Err(DistError::InvalidScale(n));
        }
        Ok(Self {
            n,
            labels: None,
            direction: Direction::HigherIsTarget,
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, DistError> {
        if labels.len() != self.n {
            return Err(DistError::LabelCount {
                expected: self.n,
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn attributes(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.n
    }

    pub fn contains(&self, value: i64) -> bool {
        value >= 1 && value <= self.n as i64
    }

    /// Reflects `value` to `n + 1 - value`.
    pub fn reflect(&self, value: usize) -> Result<usize, DistError> {
        self.check(value as i64)?;
        Ok(self.n + 1 - value)
    }

    pub fn check(&self, value: i64) -> Result<usize, DistError> {
        if self.contains(value) {
            Ok(value as usize)
        } else {
            Err(DistError::OutOfRange { value, n: self.n })
        }
    }

    fn compatible(&self, other: &AttributeScale) -> Result<(), DistError> {
        if self.n != other.n || self.direction != other.direction {
            return Err(DistError::ScaleMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }
}

/// Per-attribute response tallies for one group on one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseCounts {
    scale: AttributeScale,
    counts: Vec<u64>,
    total: u64,
}

impl ResponseCounts {
    pub fn zeros(scale: AttributeScale) -> Self {
        let counts = vec![0; scale.n()];
        Self {
            scale,
            counts,
            total: 0,
        }
    }

    pub fn from_counts(scale: AttributeScale, counts: Vec<u64>) -> Result<Self, DistError> {
        if counts.len() != scale.n() {
            return Err(DistError::LengthMismatch {
                expected: scale.n(),
                got: counts.len(),
            });
        }
        let total = counts.iter().sum();
        Ok(Self {
            scale,
            counts,
            total,
        })
    }

    /// Tallies one response. `value` is a 1-based attribute.
    pub fn add(&mut self, value: usize) -> Result<(), DistError> {
        self.add_n(value, 1)
    }

    pub fn add_n(&mut self, value: usize, times: u64) -> Result<(), DistError> {
        let a = self.scale.check(value as i64)?;
        self.counts[a - 1] += times;
        self.total += times;
        Ok(())
    }

    /// Adds another tally on the same scale into this one.
    pub fn merge(&mut self, other: &ResponseCounts) -> Result<(), DistError> {
        self.scale.compatible(&other.scale)?;
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn scale(&self) -> &AttributeScale {
        &self.scale
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, attribute: usize) -> u64 {
        self.counts[attribute - 1]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Smallest and largest attribute with a non-zero count.
    pub fn observed_range(&self) -> Option<(usize, usize)> {
        let lo = self.counts.iter().position(|&c| c > 0)?;
        let hi = self.counts.iter().rposition(|&c| c > 0)?;
        Some((lo + 1, hi + 1))
    }

    /// Add-one (Laplace, alpha = 1) smoothing: `(c_a + 1) / (N + n)`.
    ///
    /// Defined for empty tallies too, where it yields the uniform
    /// distribution.
    pub fn smooth_add_one(&self) -> ConditionalDistribution {
        let denom = (self.total + self.scale.n() as u64) as f64;
        let probs = self
            .counts
            .iter()
            .map(|&c| (c + 1) as f64 / denom)
            .collect();
        ConditionalDistribution {
            scale: self.scale.clone(),
            probs,
            smoothed: true,
        }
    }

    /// Unsmoothed empirical frequencies `c_a / N`.
    pub fn to_distribution(&self) -> Result<ConditionalDistribution, DistError> {
        if self.total == 0 {
            return Err(DistError::EmptyCounts);
        }
        let total = self.total as f64;
        let probs = self.counts.iter().map(|&c| c as f64 / total).collect();
        Ok(ConditionalDistribution {
            scale: self.scale.clone(),
            probs,
            smoothed: false,
        })
    }

    /// Raw response values in attribute order, one entry per response.
    pub fn expand(&self) -> Vec<f64> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n((i + 1) as f64, c as usize))
            .collect()
    }
}

/// `p(a | X)` over an attribute scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalDistribution {
    scale: AttributeScale,
    probs: Vec<f64>,
    smoothed: bool,
}

impl ConditionalDistribution {
    /// Wraps explicit probabilities as an unsmoothed distribution.
    pub fn new(scale: AttributeScale, probs: Vec<f64>) -> Result<Self, DistError> {
        validate_probs(&scale, &probs)?;
        Ok(Self {
            scale,
            probs,
            smoothed: false,
        })
    }

    /// Wraps probabilities that are already smoothed. Every entry must be
    /// strictly positive.
    pub fn positive(scale: AttributeScale, probs: Vec<f64>) -> Result<Self, DistError> {
        validate_probs(&scale, &probs)?;
        if probs.iter().any(|&p| p <= 0.0) {
            return Err(DistError::InvalidProbabilities(
                "smoothed distributions must be strictly positive".into(),
            ));
        }
        Ok(Self {
            scale,
            probs,
            smoothed: true,
        })
    }

    /// Uniform distribution; flagged smoothed since every entry is positive.
    pub fn uniform(scale: AttributeScale) -> Self {
        let n = scale.n();
        Self {
            scale,
            probs: vec![1.0 / n as f64; n],
            smoothed: true,
        }
    }

    pub fn scale(&self) -> &AttributeScale {
        &self.scale
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, attribute: usize) -> f64 {
        self.probs[attribute - 1]
    }

    pub fn is_smoothed(&self) -> bool {
        self.smoothed
    }

    /// `E(a | X) = sum_a a * p(a | X)`.
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Population standard deviation of the attribute under this distribution.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let d = (i + 1) as f64 - m;
                d * d * p
            })
            .sum();
        var.max(0.0).sqrt()
    }

    /// Most probable attribute; ties go to the highest attribute.
    pub fn mode_attribute(&self) -> usize {
        argmax_highest(&self.probs)
    }

    /// The same distribution with the attribute order reversed.
    pub fn reversed(&self) -> Self {
        let mut probs = self.probs.clone();
        probs.reverse();
        Self {
            scale: self.scale.clone(),
            probs,
            smoothed: self.smoothed,
        }
    }
}

fn validate_probs(scale: &AttributeScale, probs: &[f64]) -> Result<(), DistError> {
    if probs.len() != scale.n() {
        return Err(DistError::LengthMismatch {
            expected: scale.n(),
            got: probs.len(),
        });
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(DistError::InvalidProbabilities(
            "entries must be finite and non-negative".into(),
        ));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(DistError::InvalidProbabilities(format!(
            "entries sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Index (1-based) of the maximum; exact ties resolve to the highest index.
fn argmax_highest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v >= values[best] {
            best = i;
        }
    }
    best + 1
}

/// The likelihood-ratio vector `[p(a|X+) / p(a|X-)]` over all attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentativenessVector {
    scale: AttributeScale,
    ratios: Vec<f64>,
}

impl RepresentativenessVector {
    /// Builds a vector from explicit ratios; all must be finite and positive.
    pub fn from_ratios(scale: AttributeScale, ratios: Vec<f64>) -> Result<Self, DistError> {
        if ratios.len() != scale.n() {
            return Err(DistError::LengthMismatch {
                expected: scale.n(),
                got: ratios.len(),
            });
        }
        if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(DistError::InvalidProbabilities(
                "ratios must be finite and positive".into(),
            ));
        }
        Ok(Self { scale, ratios })
    }

    pub fn scale(&self) -> &AttributeScale {
        &self.scale
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn ratio(&self, attribute: usize) -> f64 {
        self.ratios[attribute - 1]
    }

    /// The exemplar `a*`: the most representative attribute. Exact ties go
    /// to the highest attribute, i.e. toward the target pole.
    pub fn exemplar(&self) -> usize {
        argmax_highest(&self.ratios)
    }

    /// `A^(N)`: every attribute whose ratio is at least the N-th largest
    /// ratio. Ties at the threshold can make the set larger than `N`.
    pub fn right_tail_attributes(&self, n_top: usize) -> Result<BTreeSet<usize>, DistError> {
        let n = self.scale.n();
        if n_top == 0 || n_top > n {
            return Err(DistError::InvalidN { n, got: n_top });
        }
        let mut sorted = self.ratios.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let threshold = sorted[n_top - 1];
        Ok(self
            .ratios
            .iter()
            .enumerate()
            .filter(|(_, r)| **r >= threshold)
            .map(|(i, _)| i + 1)
            .collect())
    }
}

/// `R[a] = target[a] / reference[a]`. Both inputs must be smoothed.
pub fn representativeness(
    target: &ConditionalDistribution,
    reference: &ConditionalDistribution,
) -> Result<RepresentativenessVector, DistError> {
    target.scale.compatible(&reference.scale)?;
    if !target.smoothed || !reference.smoothed {
        return Err(DistError::UnsmoothedInput);
    }
    let ratios = target
        .probs
        .iter()
        .zip(&reference.probs)
        .map(|(t, r)| t / r)
        .collect();
    Ok(RepresentativenessVector {
        scale: target.scale.clone(),
        ratios,
    })
}

/// `P = sum_{A^(N)} target / sum_{A^(N)} reference`, with the right tail
/// taken from `representativeness(target, reference)`.
pub fn right_tail_mass_ratio(
    target: &ConditionalDistribution,
    reference: &ConditionalDistribution,
    n_top: usize,
) -> Result<f64, DistError> {
    let rv = representativeness(target, reference)?;
    let tail = rv.right_tail_attributes(n_top)?;
    let num: f64 = tail.iter().map(|&a| target.prob(a)).sum();
    let den: f64 = tail.iter().map(|&a| reference.prob(a)).sum();
    Ok(num / den)
}
