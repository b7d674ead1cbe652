//! Core machinery for measuring representativeness heuristics in predictions
//! about two contrastive groups.
//!
//! The crate is organised bottom-up:
//!
//! - [`dist`]: ordinal scales, response counts, conditional distributions,
//!   representativeness vectors, exemplars and right tails.
//! - [`estimators`]: the scalar estimators (kernel of truth, heuristic
//!   weights, exaggeration, coefficient of variation) and their aggregation.
//! - [`survey`]: the topic registry, empirical survey ingestion and the JSONL
//!   response log.
//! - [`parse`]: extraction of scale answers from free-form model output.
//! - [`misinfo`]: the party-conditioned misinformation detection probe.
//!
//! All attributes are 1-based ordinal indices; higher attributes belong to
//! the target group pole once ingestion has applied scale reversals.

pub mod dist;
pub mod estimators;
pub mod misinfo;
pub mod parse;
pub mod survey;

pub use dist::{
    representativeness, right_tail_mass_ratio, AttributeScale, ConditionalDistribution,
    Direction, DistError, RepresentativenessVector, ResponseCounts,
};
pub use estimators::{
    aggregate, coefficient_of_variation, epsilon_reference, epsilon_target, gamma_kernel_of_truth,
    kappa, mean_difference, EstimateSummary, EstimatorError, MeanPair, StdKind, DEFAULT_TOL_DEN,
};
pub use parse::{parse_scale, ParseMode};
