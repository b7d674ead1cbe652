//! Scalar estimators solved in closed form per topic, plus aggregation.
//!
//! | estimator | relation |
//! |-----------|----------|
//! | kernel of truth γ | `E^B(+) = (1 + γ) E(+) - γ E(-)` |
//! | heuristic weight ε⁺ | `E^B(+) = E(+) + ε⁺ (P - 1)` |
//! | heuristic weight ε⁻ | `E^B(-) = E(-) - ε⁻ (P - 1)` |
//! | exaggeration κ | `R^B[a*] = κ p(a* \| +)` |
//!
//! A near-zero denominator yields [`EstimatorError::DegenerateDenominator`];
//! callers record the estimate as undefined instead of substituting a value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{representativeness, ConditionalDistribution, DistError};

/// Default guard on `|denominator|` for γ and ε.
pub const DEFAULT_TOL_DEN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("degenerate denominator in {0} (|d| within tolerance)")]
    DegenerateDenominator(&'static str),
    #[error("predicted mean for the {0} group is missing")]
    MissingPrediction(&'static str),
    #[error("empirical probability at exemplar attribute {0} is zero")]
    ZeroEmpiricalProbability(usize),
    #[error("coefficient of variation undefined for zero mean")]
    ZeroMean,
    #[error("no values supplied")]
    EmptyInput,
    #[error("every value is undefined")]
    AllUndefined,
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Empirical and predicted group means for one topic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanPair {
    pub empirical_target: f64,
    pub empirical_reference: f64,
    pub predicted_target: Option<f64>,
    pub predicted_reference: Option<f64>,
}

impl MeanPair {
    pub fn empirical(target: f64, reference: f64) -> Self {
        Self {
            empirical_target: target,
            empirical_reference: reference,
            predicted_target: None,
            predicted_reference: None,
        }
    }

    pub fn with_predicted(mut self, target: Option<f64>, reference: Option<f64>) -> Self {
        self.predicted_target = target;
        self.predicted_reference = reference;
        self
    }
}

fn guard(den: f64, tol_den: f64, what: &'static str) -> Result<f64, EstimatorError> {
    if den.abs() <= tol_den || !den.is_finite() {
        Err(EstimatorError::DegenerateDenominator(what))
    } else {
        Ok(den)
    }
}

/// γ = (E^B(+) - E(+)) / (E(+) - E(-)).
pub fn gamma_kernel_of_truth(m: &MeanPair, tol_den: f64) -> Result<f64, EstimatorError> {
    let predicted = m
        .predicted_target
        .ok_or(EstimatorError::MissingPrediction("target"))?;
    let den = guard(
        m.empirical_target - m.empirical_reference,
        tol_den,
        "gamma",
    )?;
    Ok((predicted - m.empirical_target) / den)
}

/// ε⁺ = (E^B(+) - E(+)) / (P - 1).
pub fn epsilon_target(m: &MeanPair, tail_ratio: f64, tol_den: f64) -> Result<f64, EstimatorError> {
    let predicted = m
        .predicted_target
        .ok_or(EstimatorError::MissingPrediction("target"))?;
    let den = guard(tail_ratio - 1.0, tol_den, "epsilon_target")?;
    Ok((predicted - m.empirical_target) / den)
}

/// ε⁻ = (E(-) - E^B(-)) / (P - 1).
pub fn epsilon_reference(
    m: &MeanPair,
    tail_ratio: f64,
    tol_den: f64,
) -> Result<f64, EstimatorError> {
    let predicted = m
        .predicted_reference
        .ok_or(EstimatorError::MissingPrediction("reference"))?;
    let den = guard(tail_ratio - 1.0, tol_den, "epsilon_reference")?;
    Ok((m.empirical_reference - predicted) / den)
}

/// Intermediate values of a κ computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub exemplar: usize,
    pub ratio: f64,
    pub empirical_prob: f64,
    pub kappa: f64,
}

/// κ with its exemplar: the exemplar comes from the predicted ratio vector,
/// the denominator from the empirical target distribution.
pub fn kappa_detail(
    pred_target: &ConditionalDistribution,
    pred_reference: &ConditionalDistribution,
    emp_target: &ConditionalDistribution,
) -> Result<KappaEstimate, EstimatorError> {
    let rv = representativeness(pred_target, pred_reference)?;
    if rv.scale().n() != emp_target.scale().n() {
        return Err(DistError::ScaleMismatch {
            left: rv.scale().n(),
            right: emp_target.scale().n(),
        }
        .into());
    }
    let exemplar = rv.exemplar();
    let ratio = rv.ratio(exemplar);
    let empirical_prob = emp_target.prob(exemplar);
    if empirical_prob <= 0.0 {
        return Err(EstimatorError::ZeroEmpiricalProbability(exemplar));
    }
    Ok(KappaEstimate {
        exemplar,
        ratio,
        empirical_prob,
        kappa: ratio / empirical_prob,
    })
}

pub fn kappa(
    pred_target: &ConditionalDistribution,
    pred_reference: &ConditionalDistribution,
    emp_target: &ConditionalDistribution,
) -> Result<f64, EstimatorError> {
    kappa_detail(pred_target, pred_reference, emp_target).map(|k| k.kappa)
}

/// σ / μ with the population standard deviation.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, EstimatorError> {
    if values.is_empty() {
        return Err(EstimatorError::EmptyInput);
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    if mu == 0.0 {
        return Err(EstimatorError::ZeroMean);
    }
    let var = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mu)
}

/// `(E(+) - E(-), E^B(+) - E^B(-))`: one point of the mean-difference scatter.
pub fn mean_difference(m: &MeanPair) -> Result<(f64, f64), EstimatorError> {
    let pt = m
        .predicted_target
        .ok_or(EstimatorError::MissingPrediction("target"))?;
    let pr = m
        .predicted_reference
        .ok_or(EstimatorError::MissingPrediction("reference"))?;
    Ok((
        m.empirical_target - m.empirical_reference,
        pt - pr,
    ))
}

/// Which standard deviation [`aggregate`] reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdKind {
    /// Divides by `n - 1`; a single value has std 0.
    #[default]
    Sample,
    /// Divides by `n`.
    Population,
}

/// Mean (std) over the defined values of a set of per-topic estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub undefined_count: usize,
}

pub fn aggregate(values: &[Option<f64>], kind: StdKind) -> Result<EstimateSummary, EstimatorError> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(EstimatorError::AllUndefined);
    }
    let count = defined.len();
    let mean = defined.iter().sum::<f64>() / count as f64;
    let ss: f64 = defined.iter().map(|v| (v - mean).powi(2)).sum();
    let std = match kind {
        StdKind::Population => (ss / count as f64).sqrt(),
        StdKind::Sample if count > 1 => (ss / (count - 1) as f64).sqrt(),
        StdKind::Sample => 0.0,
    };
    Ok(EstimateSummary {
        mean,
        std,
        count,
        undefined_count: values.len() - count,
    })
}
