//! Self-check against the shipped fixtures: published means and γ values,
//! the empirical κ anchor, and the no-deviation identity log.

use repheur_core::estimators::kappa_detail;
use repheur_core::survey::{
    ingest_empirical_csv, ingest_means_csv, ingest_response_log, Dataset, Regime, Registry,
};
use repheur_core::{AttributeScale, ConditionalDistribution, ParseMode};
use serde::{Deserialize, Serialize};

use crate::compute::compute_report;
use crate::config::StudyConfig;
use crate::data::{PredictedMeansTable, StudyData};
use crate::plot::mean_difference_figure;

pub mod fixtures {
    pub const EMPIRICAL_MEANS: &str = include_str!("../../core/fixtures/table7/empirical.csv");
    pub const PUBLISHED_GAMMA: &str = include_str!("../../core/fixtures/table7/published_gamma.csv");
    pub const PUBLISHED_GAMMA_SUMMARY: &str =
        include_str!("../../core/fixtures/table7/published_gamma_summary.csv");
    pub const PREDICTED_MEANS: [(&str, &str); 5] = [
        ("llama2_70b", include_str!("../../core/fixtures/table7/llama2_70b.csv")),
        ("gpt_3_5", include_str!("../../core/fixtures/table7/gpt_3_5.csv")),
        ("gpt_4", include_str!("../../core/fixtures/table7/gpt_4.csv")),
        ("gemini", include_str!("../../core/fixtures/table7/gemini.csv")),
        ("human_pred", include_str!("../../core/fixtures/table7/human_pred.csv")),
    ];
    pub const SYNTHETIC_EMPIRICAL: &str = include_str!("../../core/fixtures/synthetic_empirical.csv");
    pub const IDENTITY_LOG: &str = include_str!("../../core/fixtures/synthetic_identity_log.jsonl");
}

/// Published empirical Liberal-Conservative exemplar ratio and probability.
pub const LC_EXEMPLAR_RATIO: f64 = 5.86;
pub const LC_EXEMPLAR_PROB: f64 = 0.37;
pub const LC_EMPIRICAL_KAPPA: f64 = 15.81;

const GAMMA_TOL: f64 = 0.02;
const KAPPA_TOL: f64 = 0.10;
const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub group: &'static str,
    pub name: String,
    pub expected: f64,
    pub actual: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(group: &'static str, name: String, expected: f64, actual: Option<f64>, tolerance: f64) -> Self {
        let pass = actual.is_some_and(|a| (a - expected).abs() <= tolerance);
        Check {
            group,
            name,
            expected,
            actual,
            tolerance,
            pass,
        }
    }

    pub fn line(&self) -> String {
        let actual = self.actual.map_or("undefined".to_string(), |a| format!("{a:.4}"));
        format!(
            "{} {}: expected {} got {} (tol {})",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.expected,
            actual,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn group<'a>(&'a self, group: &'a str) -> impl Iterator<Item = &'a Check> {
        self.checks.iter().filter(move |c| c.group == group)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Deserialize)]
struct PublishedGamma {
    model: String,
    topic_id: String,
    gamma: f64,
}

#[derive(Debug, Deserialize)]
struct PublishedSummary {
    model: String,
    dataset: Dataset,
    mean: f64,
}

fn read_csv<T: for<'de> Deserialize<'de>>(text: &str) -> Vec<T> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("embedded fixture parses")
}

/// Report over the published means: empirical means against each predictor.
pub fn published_means_report() -> crate::MetricsReport {
    let registry = Registry::builtin_anes();
    let mut data = StudyData::new(registry.clone());
    data.empirical_means = ingest_means_csv(fixtures::EMPIRICAL_MEANS.as_bytes(), &registry)
        .expect("embedded fixture parses");
    for (model, text) in fixtures::PREDICTED_MEANS {
        data.predicted_means.push(PredictedMeansTable {
            predictor: model.to_string(),
            regime: Regime::Baseline,
            table: ingest_means_csv(text.as_bytes(), &registry).expect("embedded fixture parses"),
        });
    }
    let cfg = StudyConfig {
        datasets: vec![Dataset::Anes],
        ..StudyConfig::default()
    };
    compute_report(&cfg, &data)
}

/// Per-topic γ against the published values, plus the row-average anchor.
pub fn gamma_checks() -> Vec<Check> {
    let report = published_means_report();
    let gamma = |model: &str, topic: &str| {
        report
            .cells
            .iter()
            .find(|c| c.predictor == model && c.topic_id == topic)
            .and_then(|c| c.gamma.value())
    };
    let mut checks: Vec<Check> = read_csv::<PublishedGamma>(fixtures::PUBLISHED_GAMMA)
        .into_iter()
        .map(|p| {
            Check::new(
                "gamma_per_topic",
                format!("gamma {} {}", p.model, p.topic_id),
                p.gamma,
                gamma(&p.model, &p.topic_id),
                GAMMA_TOL,
            )
        })
        .collect();
    checks.push(Check::new(
        "gamma_anchor",
        "gamma gpt_4 liberal_conservative".into(),
        0.54,
        gamma("gpt_4", "liberal_conservative"),
        0.005,
    ));
    for s in read_csv::<PublishedSummary>(fixtures::PUBLISHED_GAMMA_SUMMARY)
        .into_iter()
        .filter(|s| s.model == "gpt_4" && s.dataset == Dataset::Anes)
    {
        let actual = report
            .aggregates
            .iter()
            .find(|a| a.predictor == s.model && a.dataset == s.dataset)
            .and_then(|a| a.gamma.mean.value());
        checks.push(Check::new(
            "gamma_anchor",
            format!("gamma {} {} mean", s.model, s.dataset),
            s.mean,
            actual,
            GAMMA_TOL,
        ));
    }
    checks
}

/// Distributions over a 7-point scale whose exemplar is attribute 6 with
/// the published ratio and target probability.
pub fn lc_anchor_distributions() -> (ConditionalDistribution, ConditionalDistribution) {
    let scale = AttributeScale::new(7).expect("valid scale");
    let target = vec![0.02, 0.03, 0.05, 0.13, 0.25, LC_EXEMPLAR_PROB, 0.15];
    let mut reference = vec![0.15, 0.25, 0.25, 0.15, 0.10, LC_EXEMPLAR_PROB / LC_EXEMPLAR_RATIO];
    reference.push(1.0 - reference.iter().sum::<f64>());
    (
        ConditionalDistribution::positive(scale.clone(), target).expect("valid"),
        ConditionalDistribution::positive(scale, reference).expect("valid"),
    )
}

pub fn kappa_check() -> Check {
    let (t, r) = lc_anchor_distributions();
    let k = kappa_detail(&t, &r, &t).ok().filter(|k| k.exemplar == 6);
    Check::new(
        "kappa",
        "kappa empirical liberal_conservative".into(),
        LC_EMPIRICAL_KAPPA,
        k.map(|k| k.kappa),
        KAPPA_TOL,
    )
}

/// Report over the synthetic empirical sample and its identity log.
pub fn identity_report() -> crate::MetricsReport {
    let registry = Registry::builtin();
    let mut data = StudyData::new(registry.clone());
    data.add_empirical(
        ingest_empirical_csv(fixtures::SYNTHETIC_EMPIRICAL.as_bytes(), &registry)
            .expect("embedded fixture parses"),
    );
    let log = ingest_response_log(fixtures::IDENTITY_LOG.as_bytes(), &registry, ParseMode::Lenient)
        .expect("embedded fixture parses");
    data.add_records(log.records);
    compute_report(&StudyConfig::default(), &data)
}

/// γ, ε⁺, ε⁻ on every identity cell and |x - y| on every scatter point.
pub fn identity_checks() -> Vec<Check> {
    let report = identity_report();
    let mut checks = Vec::new();
    for c in &report.cells {
        for (what, m) in [
            ("gamma", &c.gamma),
            ("eps_target", &c.epsilon_target),
            ("eps_reference", &c.epsilon_reference),
        ] {
            checks.push(Check::new(
                "identity",
                format!("{what} identity {}", c.topic_id),
                0.0,
                m.value(),
                IDENTITY_TOL,
            ));
        }
    }
    let fig = mean_difference_figure(&report);
    for p in &fig.points {
        checks.push(Check::new(
            "identity_plot",
            format!("y - x identity {}", p.topic_id),
            0.0,
            Some(p.y - p.x),
            IDENTITY_TOL,
        ));
    }
    if report.cells.is_empty() || fig.points.len() != report.cells.len() {
        checks.push(Check::new(
            "identity_plot",
            "identity plot points per cell".into(),
            report.cells.len() as f64,
            Some(fig.points.len() as f64),
            0.0,
        ));
    }
    checks
}

pub fn validate_fixtures() -> ValidationReport {
    let mut checks = gamma_checks();
    checks.push(kappa_check());
    checks.extend(identity_checks());
    ValidationReport { checks }
}
