use std::path::{Path, PathBuf};

use repheur_core::mean_difference;
use repheur_core::survey::{Dataset, Group, Regime};
use serde::Serialize;

use crate::compute::{GroupStats, MetricsReport};
use crate::ReportError;

/// One scatter point: empirical against predicted target-minus-reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanDifferencePoint {
    pub predictor: String,
    pub regime: Regime,
    pub dataset: Dataset,
    pub topic_id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Omitted {
    pub predictor: String,
    pub regime: Regime,
    pub topic_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanDifferenceFigure {
    pub figure: &'static str,
    pub points: Vec<MeanDifferencePoint>,
    pub omitted: Vec<Omitted>,
}

/// Predicted mean with the observed response range.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeBar {
    pub predictor: String,
    pub regime: Regime,
    pub dataset: Dataset,
    pub unit: String,
    pub group: Group,
    pub mean: Option<f64>,
    pub min: Option<usize>,
    pub max: Option<usize>,
    pub empirical_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseRangeFigure {
    pub figure: &'static str,
    pub bars: Vec<RangeBar>,
}

/// Predicted minus empirical mean for one MFQ foundation and group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationBar {
    pub predictor: String,
    pub regime: Regime,
    pub foundation: String,
    pub group: Group,
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfqDeviationFigure {
    pub figure: &'static str,
    pub bars: Vec<DeviationBar>,
}

pub fn mean_difference_figure(report: &MetricsReport) -> MeanDifferenceFigure {
    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for c in &report.cells {
        match mean_difference(&c.means) {
            Ok((x, y)) => points.push(MeanDifferencePoint {
                predictor: c.predictor.clone(),
                regime: c.regime,
                dataset: c.dataset,
                topic_id: c.topic_id.clone(),
                x,
                y,
            }),
            Err(e) => omitted.push(Omitted {
                predictor: c.predictor.clone(),
                regime: c.regime,
                topic_id: c.topic_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    MeanDifferenceFigure {
        figure: "mean_difference",
        points,
        omitted,
    }
}

fn group_pair<'a>(target: &'a GroupStats, reference: &'a GroupStats) -> [(Group, &'a GroupStats); 2] {
    [(Group::Target, target), (Group::Reference, reference)]
}

pub fn response_range_figure(report: &MetricsReport) -> ResponseRangeFigure {
    let mut bars = Vec::new();
    for u in &report.units {
        let emp = group_pair(&u.empirical_target, &u.empirical_reference);
        for ((group, s), (_, e)) in group_pair(&u.target, &u.reference).into_iter().zip(emp) {
            bars.push(RangeBar {
                predictor: u.predictor.clone(),
                regime: u.regime,
                dataset: u.dataset,
                unit: u.unit.clone(),
                group,
                mean: s.mean.value(),
                min: s.min,
                max: s.max,
                empirical_mean: e.mean.value(),
            });
        }
    }
    ResponseRangeFigure {
        figure: "response_range",
        bars,
    }
}

pub fn mfq_deviation_figure(report: &MetricsReport) -> MfqDeviationFigure {
    let mut bars = Vec::new();
    for u in report.units.iter().filter(|u| u.dataset == Dataset::Mfq) {
        let emp = group_pair(&u.empirical_target, &u.empirical_reference);
        for ((group, s), (_, e)) in group_pair(&u.target, &u.reference).into_iter().zip(emp) {
            bars.push(DeviationBar {
                predictor: u.predictor.clone(),
                regime: u.regime,
                foundation: u.unit.clone(),
                group,
                deviation: s.mean.value().zip(e.mean.value()).map(|(p, e)| p - e),
            });
        }
    }
    MfqDeviationFigure {
        figure: "mfq_deviation",
        bars,
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, doc: &T) -> Result<PathBuf, ReportError> {
    let path = dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(path)
}

/// Writes one JSON document per figure into `out_dir`.
pub fn emit_plot_data(report: &MetricsReport, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|e| ReportError::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    Ok(vec![
        write_json(out_dir, "mean_difference", &mean_difference_figure(report))?,
        write_json(out_dir, "response_range", &response_range_figure(report))?,
        write_json(out_dir, "mfq_deviation", &mfq_deviation_figure(report))?,
    ])
}
