use std::collections::{BTreeMap, BTreeSet};

use repheur_core::estimators::kappa_detail;
use repheur_core::survey::{Dataset, Group, MeanRow, Regime, ResponseRecord, Source, TopicSpec};
use repheur_core::{
    aggregate, coefficient_of_variation, epsilon_reference, epsilon_target, gamma_kernel_of_truth,
    representativeness, right_tail_mass_ratio, DistError, EstimatorError, MeanPair, ResponseCounts,
    StdKind,
};
use serde::Serialize;

use crate::config::StudyConfig;
use crate::data::StudyData;

/// Label for predictions made by people rather than a model.
pub const HUMAN_PREDICTOR: &str = "human_pred";
/// Label for rows computed from empirical data alone.
pub const EMPIRICAL: &str = "Empirical";

/// A value or the reason it is undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Value(f64),
    Undefined(String),
}

impl Metric {
    pub fn undefined(reason: &str) -> Self {
        Metric::Undefined(reason.to_string())
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(*v),
            Metric::Undefined(_) => None,
        }
    }

    /// Two-decimal table cell, or `NA:<reason>`.
    pub fn cell(&self) -> String {
        match self {
            Metric::Value(v) => fmt2(*v),
            Metric::Undefined(r) => format!("NA:{r}"),
        }
    }
}

impl From<Result<f64, EstimatorError>> for Metric {
    fn from(r: Result<f64, EstimatorError>) -> Self {
        match r {
            Ok(v) => Metric::Value(v),
            Err(e) => Metric::Undefined(estimator_reason(&e).to_string()),
        }
    }
}

pub fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn estimator_reason(e: &EstimatorError) -> &'static str {
    match e {
        EstimatorError::DegenerateDenominator(_) => "degenerate_denominator",
        EstimatorError::MissingPrediction(_) => "no_prediction",
        EstimatorError::ZeroEmpiricalProbability(_) => "zero_probability",
        EstimatorError::ZeroMean => "zero_mean",
        EstimatorError::EmptyInput => "no_responses",
        EstimatorError::AllUndefined => "all_undefined",
        EstimatorError::Dist(d) => dist_reason(d),
    }
}

fn dist_reason(e: &DistError) -> &'static str {
    match e {
        DistError::EmptyCounts => "no_responses",
        DistError::ScaleMismatch { .. } => "scale_mismatch",
        _ => "distribution_error",
    }
}

/// Mean (std) of a set of values, with how many were undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: Metric,
    pub std: Metric,
    pub count: usize,
    pub undefined: usize,
}

impl Summary {
    pub fn of(values: &[Metric], kind: StdKind) -> Self {
        let vals: Vec<Option<f64>> = values.iter().map(Metric::value).collect();
        match aggregate(&vals, kind) {
            Ok(s) => Summary {
                mean: Metric::Value(s.mean),
                std: Metric::Value(s.std),
                count: s.count,
                undefined: s.undefined_count,
            },
            Err(e) => {
                let reason = if values.is_empty() {
                    "no_data"
                } else {
                    estimator_reason(&e)
                };
                Summary {
                    mean: Metric::undefined(reason),
                    std: Metric::undefined(reason),
                    count: 0,
                    undefined: values.len(),
                }
            }
        }
    }

    /// A single value passed through; the std is zero.
    fn single(m: Metric) -> Self {
        let defined = m.value().is_some();
        Summary {
            std: match &m {
                Metric::Value(_) => Metric::Value(0.0),
                u => u.clone(),
            },
            mean: m,
            count: defined as usize,
            undefined: (!defined) as usize,
        }
    }
}

/// Descriptive statistics of one group's responses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub mean: Metric,
    pub std: Metric,
    pub min: Option<usize>,
    pub max: Option<usize>,
    /// Parsed responses behind the statistics; zero for means-only input.
    pub n: u64,
    pub refusals: u64,
}

impl GroupStats {
    fn from_counts(c: &ResponseCounts, refusals: u64, kind: StdKind) -> Self {
        let values: Vec<Option<f64>> = c.expand().into_iter().map(Some).collect();
        let (mean, std) = match aggregate(&values, kind) {
            Ok(s) => (Metric::Value(s.mean), Metric::Value(s.std)),
            Err(_) => (Metric::undefined("no_responses"), Metric::undefined("no_responses")),
        };
        let range = c.observed_range();
        GroupStats {
            mean,
            std,
            min: range.map(|r| r.0),
            max: range.map(|r| r.1),
            n: c.total(),
            refusals,
        }
    }

    fn from_row(row: &MeanRow) -> Self {
        GroupStats {
            mean: Metric::Value(row.mean),
            std: row.std.map_or(Metric::undefined("not_reported"), Metric::Value),
            min: None,
            max: None,
            n: 0,
            refusals: 0,
        }
    }
}

/// Metrics of one (predictor, regime, topic) cell. With pooled MFQ
/// estimation the "topic" is a whole foundation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMetrics {
    pub predictor: String,
    pub regime: Regime,
    pub dataset: Dataset,
    pub topic_id: String,
    pub unit: String,
    pub means: MeanPair,
    pub target: GroupStats,
    pub reference: GroupStats,
    pub empirical_target: GroupStats,
    pub empirical_reference: GroupStats,
    /// Representativeness of the predicted distributions.
    pub ratios: Option<Vec<f64>>,
    pub exemplar: Option<usize>,
    pub tail_ratio: Metric,
    pub gamma: Metric,
    pub epsilon_target: Metric,
    pub epsilon_reference: Metric,
    pub kappa: Metric,
    pub cv_target: Metric,
    pub cv_reference: Metric,
    /// False when the parse rate is below the configured minimum.
    pub complete: bool,
    pub notes: Vec<String>,
}

/// A topic-level metric, or the mean (std) over a foundation's questions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitValue {
    pub value: Metric,
    /// Spread over the questions averaged; absent for single topics.
    pub std: Option<Metric>,
}

impl UnitValue {
    fn over(values: &[Metric], kind: StdKind) -> Self {
        if let [one] = values {
            return UnitValue {
                value: one.clone(),
                std: None,
            };
        }
        let s = Summary::of(values, kind);
        UnitValue {
            value: s.mean,
            std: Some(s.std),
        }
    }
}

/// Metrics per (predictor, regime, unit); a unit is an ANES topic or an
/// MFQ foundation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitMetrics {
    pub predictor: String,
    pub regime: Regime,
    pub dataset: Dataset,
    pub unit: String,
    pub topics: Vec<String>,
    pub gamma: UnitValue,
    pub epsilon_target: UnitValue,
    pub epsilon_reference: UnitValue,
    pub kappa: UnitValue,
    pub cv_target: UnitValue,
    pub cv_reference: UnitValue,
    pub target: GroupStats,
    pub reference: GroupStats,
    pub empirical_target: GroupStats,
    pub empirical_reference: GroupStats,
    pub incomplete_cells: usize,
}

/// Empirical-only statistics of one unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalUnit {
    pub dataset: Dataset,
    pub unit: String,
    pub target: GroupStats,
    pub reference: GroupStats,
    /// κ with empirical distributions in every slot.
    pub kappa: UnitValue,
}

/// Aggregates per (predictor, dataset, regime) over units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub predictor: String,
    pub dataset: Dataset,
    pub regime: Regime,
    pub units: usize,
    pub gamma: Summary,
    pub epsilon_target: Summary,
    pub epsilon_reference: Summary,
    pub kappa: Summary,
    /// Over both groups' unit CVs.
    pub cv: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub n_right_tail: usize,
    pub std_kind: StdKind,
    pub mfq_pooled_first: bool,
    pub cells: Vec<CellMetrics>,
    pub units: Vec<UnitMetrics>,
    pub aggregates: Vec<AggregateMetrics>,
    pub empirical: Vec<EmpiricalUnit>,
    pub empirical_kappa: BTreeMap<Dataset, Summary>,
    /// Topics left out because no empirical data was supplied.
    pub missing_empirical: Vec<String>,
    pub rejected_lines: usize,
}

impl MetricsReport {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.empirical.is_empty()
    }

    pub fn datasets(&self) -> BTreeSet<Dataset> {
        self.units
            .iter()
            .map(|u| u.dataset)
            .chain(self.empirical.iter().map(|e| e.dataset))
            .collect()
    }
}

/// One group's observations: a response tally or a published mean.
#[derive(Debug, Clone)]
enum Obs {
    Counts(ResponseCounts, u64),
    Mean(MeanRow),
}

impl Obs {
    fn mean(&self) -> Option<f64> {
        match self {
            Obs::Counts(c, _) => c.to_distribution().ok().map(|d| d.mean()),
            Obs::Mean(r) => Some(r.mean),
        }
    }

    fn counts(&self) -> Option<&ResponseCounts> {
        match self {
            Obs::Counts(c, _) => Some(c),
            Obs::Mean(_) => None,
        }
    }

    fn stats(&self, kind: StdKind) -> GroupStats {
        match self {
            Obs::Counts(c, refusals) => GroupStats::from_counts(c, *refusals, kind),
            Obs::Mean(r) => GroupStats::from_row(r),
        }
    }

    /// Pools several observations: counts merge, means average.
    fn pool(items: &[&Obs]) -> Option<Obs> {
        if let Some(Obs::Counts(first, _)) = items.first() {
            let mut acc = ResponseCounts::zeros(first.scale().clone());
            let mut refusals = 0;
            for o in items {
                let Obs::Counts(c, r) = o else { return None };
                acc.merge(c).ok()?;
                refusals += r;
            }
            return Some(Obs::Counts(acc, refusals));
        }
        let means: Option<Vec<f64>> = items
            .iter()
            .map(|o| match o {
                Obs::Mean(r) => Some(r.mean),
                Obs::Counts(..) => None,
            })
            .collect();
        let means = means.filter(|m| !m.is_empty())?;
        Some(Obs::Mean(MeanRow {
            mean: means.iter().sum::<f64>() / means.len() as f64,
            std: None,
            n_respondents: None,
        }))
    }
}

#[derive(Debug, Clone)]
struct Pair {
    target: Obs,
    reference: Obs,
}

impl Pair {
    fn get(&self, g: Group) -> &Obs {
        match g {
            Group::Target => &self.target,
            Group::Reference => &self.reference,
        }
    }

    fn pool(items: &[&Pair]) -> Option<Pair> {
        let t: Vec<&Obs> = items.iter().map(|p| &p.target).collect();
        let r: Vec<&Obs> = items.iter().map(|p| &p.reference).collect();
        Some(Pair {
            target: Obs::pool(&t)?,
            reference: Obs::pool(&r)?,
        })
    }
}

fn predictor_of(r: &ResponseRecord) -> Option<String> {
    match r.source {
        Source::Model => r.model_name.clone(),
        Source::HumanPrediction => Some(r.model_name.clone().unwrap_or_else(|| HUMAN_PREDICTOR.into())),
        Source::EmpiricalHuman => None,
    }
}

fn empirical_pair(data: &StudyData, topic: &str) -> Option<Pair> {
    let counts = |g| {
        data.empirical
            .get(topic, g)
            .filter(|c| c.total() > 0)
            .map(|c| Obs::Counts(c.clone(), 0))
    };
    if let (Some(t), Some(r)) = (counts(Group::Target), counts(Group::Reference)) {
        return Some(Pair {
            target: t,
            reference: r,
        });
    }
    Some(Pair {
        target: Obs::Mean(*data.empirical_means.get(topic, Group::Target)?),
        reference: Obs::Mean(*data.empirical_means.get(topic, Group::Reference)?),
    })
}

type CellKey = (String, Regime, String);

/// Predicted observations keyed by (predictor, regime, topic).
fn predicted_pairs(
    cfg: &StudyConfig,
    data: &StudyData,
) -> BTreeMap<CellKey, Pair> {
    let mut tallies: BTreeMap<CellKey, [Option<(ResponseCounts, u64)>; 2]> = BTreeMap::new();
    for r in &data.records {
        if !cfg.regimes.contains(&r.regime) {
            continue;
        }
        let (Some(pred), Some(spec)) = (predictor_of(r), data.registry.get(&r.topic_id)) else {
            continue;
        };
        let slots = tallies.entry((pred, r.regime, r.topic_id.clone())).or_default();
        let slot = match r.group {
            Group::Target => &mut slots[0],
            Group::Reference => &mut slots[1],
        };
        let (counts, refusals) =
            slot.get_or_insert_with(|| (ResponseCounts::zeros(spec.scale.clone()), 0));
        match r.scale_value {
            Some(v) => counts.add(v).expect("ingest checked the range"),
            None => *refusals += 1,
        }
    }
    let mut out = BTreeMap::new();
    for (key, [t, r]) in tallies {
        let spec = data.registry.get(&key.2).expect("filtered above");
        let side = |s: Option<(ResponseCounts, u64)>| {
            let (c, n) = s.unwrap_or_else(|| (ResponseCounts::zeros(spec.scale.clone()), 0));
            Obs::Counts(c, n)
        };
        out.insert(
            key,
            Pair {
                target: side(t),
                reference: side(r),
            },
        );
    }
    for pm in &data.predicted_means {
        if !cfg.regimes.contains(&pm.regime) {
            continue;
        }
        for spec in data.registry.topics() {
            let (Some(t), Some(r)) = (
                pm.table.get(&spec.topic_id, Group::Target),
                pm.table.get(&spec.topic_id, Group::Reference),
            ) else {
                continue;
            };
            out.entry((pm.predictor.clone(), pm.regime, spec.topic_id.clone()))
                .or_insert(Pair {
                    target: Obs::Mean(*t),
                    reference: Obs::Mean(*r),
                });
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn compute_cell(
    cfg: &StudyConfig,
    predictor: &str,
    regime: Regime,
    dataset: Dataset,
    topic_id: &str,
    unit: &str,
    emp: &Pair,
    pred: &Pair,
) -> Option<CellMetrics> {
    let tol = cfg.tolerances.den;
    let (et, er) = (emp.target.mean()?, emp.reference.mean()?);
    let means = MeanPair::empirical(et, er).with_predicted(pred.target.mean(), pred.reference.mean());
    let gamma = Metric::from(gamma_kernel_of_truth(&means, tol));

    let emp_counts = emp.target.counts().zip(emp.reference.counts());
    let tail_ratio = match emp_counts {
        Some((t, r)) => match right_tail_mass_ratio(&t.smooth_add_one(), &r.smooth_add_one(), cfg.n_right_tail) {
            Ok(p) => Metric::Value(p),
            Err(e) => Metric::undefined(dist_reason(&e)),
        },
        None => Metric::undefined("means_only_empirical"),
    };
    let (epsilon_target, epsilon_reference) = match tail_ratio.value() {
        Some(p) => (
            Metric::from(epsilon_target(&means, p, tol)),
            Metric::from(epsilon_reference(&means, p, tol)),
        ),
        None => (tail_ratio.clone(), tail_ratio.clone()),
    };

    let pred_counts = pred.target.counts().zip(pred.reference.counts());
    let (ratios, exemplar, kappa) = match (pred_counts, emp_counts) {
        (None, _) => (None, None, Metric::undefined("means_only_prediction")),
        (_, None) => (None, None, Metric::undefined("means_only_empirical")),
        (Some((pt, pr)), _) if pt.total() == 0 || pr.total() == 0 => {
            (None, None, Metric::undefined("no_responses"))
        }
        (Some((pt, pr)), Some((e, _))) => {
            let (ps, rs) = (pt.smooth_add_one(), pr.smooth_add_one());
            let ratios = representativeness(&ps, &rs).ok();
            let exemplar = ratios.as_ref().map(|v| v.exemplar());
            let kappa = Metric::from(kappa_detail(&ps, &rs, &e.smooth_add_one()).map(|k| k.kappa));
            (ratios.map(|v| v.ratios().to_vec()), exemplar, kappa)
        }
    };

    let cv = |o: &Obs| match o {
        Obs::Counts(c, _) => Metric::from(coefficient_of_variation(&c.expand())),
        Obs::Mean(_) => Metric::undefined("means_only_prediction"),
    };
    let mut notes = Vec::new();
    let mut complete = true;
    for g in Group::BOTH {
        if let Obs::Counts(c, refusals) = pred.get(g) {
            let total = c.total() + refusals;
            let rate = if total == 0 { 0.0 } else { c.total() as f64 / total as f64 };
            if rate < cfg.min_parse_rate {
                complete = false;
                notes.push(format!("{g} parse rate {rate:.2} below {:.2}", cfg.min_parse_rate));
            }
        }
    }
    Some(CellMetrics {
        predictor: predictor.to_string(),
        regime,
        dataset,
        topic_id: topic_id.to_string(),
        unit: unit.to_string(),
        means,
        target: pred.target.stats(cfg.std_kind),
        reference: pred.reference.stats(cfg.std_kind),
        empirical_target: emp.target.stats(cfg.std_kind),
        empirical_reference: emp.reference.stats(cfg.std_kind),
        ratios,
        exemplar,
        tail_ratio,
        gamma,
        epsilon_target,
        epsilon_reference,
        kappa,
        cv_target: cv(&pred.target),
        cv_reference: cv(&pred.reference),
        complete,
        notes,
    })
}

fn empirical_kappa(emp: &Pair) -> Metric {
    match emp.target.counts().zip(emp.reference.counts()) {
        Some((t, r)) => {
            let (ts, rs) = (t.smooth_add_one(), r.smooth_add_one());
            Metric::from(kappa_detail(&ts, &rs, &ts).map(|k| k.kappa))
        }
        None => Metric::undefined("means_only_empirical"),
    }
}

fn pooled(dataset: Dataset, cfg: &StudyConfig) -> bool {
    cfg.mfq_pooled_first && dataset == Dataset::Mfq
}

/// Composes ingestion output into the full metric report. Per-cell failures
/// become undefined values with a reason; nothing aborts the report.
pub fn compute_report(cfg: &StudyConfig, data: &StudyData) -> MetricsReport {
    let kind = cfg.std_kind;
    let topics: Vec<&TopicSpec> = data.registry.topics().iter().collect();

    let mut empirical: BTreeMap<&str, Pair> = BTreeMap::new();
    let mut missing_empirical = Vec::new();
    for t in &topics {
        match empirical_pair(data, &t.topic_id) {
            Some(p) => {
                empirical.insert(&t.topic_id, p);
            }
            None => missing_empirical.push(t.topic_id.clone()),
        }
    }

    // units in registry order, each with its topics
    let mut unit_order: Vec<(Dataset, String, Vec<&TopicSpec>)> = Vec::new();
    for t in &topics {
        if !empirical.contains_key(t.topic_id.as_str()) {
            continue;
        }
        match unit_order.iter_mut().find(|(d, u, _)| *d == t.dataset && u == t.unit_id()) {
            Some(entry) => entry.2.push(t),
            None => unit_order.push((t.dataset, t.unit_id().to_string(), vec![t])),
        }
    }

    let predicted = predicted_pairs(cfg, data);
    let mut grid: BTreeSet<(String, Regime)> = BTreeSet::new();
    for (p, r, _) in predicted.keys() {
        grid.insert((p.clone(), *r));
    }

    let mut cells = Vec::new();
    let mut units = Vec::new();
    for (predictor, regime) in &grid {
        for (dataset, unit, specs) in &unit_order {
            let pairs: Vec<(&TopicSpec, &Pair, &Pair)> = specs
                .iter()
                .filter_map(|s| {
                    let pred = predicted.get(&(predictor.clone(), *regime, s.topic_id.clone()))?;
                    Some((*s, &empirical[s.topic_id.as_str()], pred))
                })
                .collect();
            if pairs.is_empty() {
                continue;
            }
            let emp_all: Vec<&Pair> = pairs.iter().map(|p| p.1).collect();
            let pred_all: Vec<&Pair> = pairs.iter().map(|p| p.2).collect();
            let unit_cells: Vec<CellMetrics> = if pooled(*dataset, cfg) {
                match (Pair::pool(&emp_all), Pair::pool(&pred_all)) {
                    (Some(e), Some(p)) => {
                        compute_cell(cfg, predictor, *regime, *dataset, unit, unit, &e, &p)
                            .into_iter()
                            .collect()
                    }
                    _ => Vec::new(),
                }
            } else {
                pairs
                    .iter()
                    .filter_map(|(s, e, p)| {
                        compute_cell(cfg, predictor, *regime, *dataset, &s.topic_id, unit, e, p)
                    })
                    .collect()
            };
            if unit_cells.is_empty() {
                continue;
            }
            let collect = |f: fn(&CellMetrics) -> &Metric| -> Vec<Metric> {
                unit_cells.iter().map(|c| f(c).clone()).collect()
            };
            let stats = |items: &[&Pair], g: Group| match Pair::pool(items) {
                Some(p) => p.get(g).stats(kind),
                None => items[0].get(g).stats(kind),
            };
            units.push(UnitMetrics {
                predictor: predictor.clone(),
                regime: *regime,
                dataset: *dataset,
                unit: unit.clone(),
                topics: pairs.iter().map(|p| p.0.topic_id.clone()).collect(),
                gamma: UnitValue::over(&collect(|c| &c.gamma), kind),
                epsilon_target: UnitValue::over(&collect(|c| &c.epsilon_target), kind),
                epsilon_reference: UnitValue::over(&collect(|c| &c.epsilon_reference), kind),
                kappa: UnitValue::over(&collect(|c| &c.kappa), kind),
                cv_target: UnitValue::over(&collect(|c| &c.cv_target), kind),
                cv_reference: UnitValue::over(&collect(|c| &c.cv_reference), kind),
                target: stats(&pred_all, Group::Target),
                reference: stats(&pred_all, Group::Reference),
                empirical_target: stats(&emp_all, Group::Target),
                empirical_reference: stats(&emp_all, Group::Reference),
                incomplete_cells: unit_cells.iter().filter(|c| !c.complete).count(),
            });
            cells.extend(unit_cells);
        }
    }

    let mut aggregates = Vec::new();
    for (predictor, regime) in &grid {
        let datasets: BTreeSet<Dataset> = units
            .iter()
            .filter(|u| &u.predictor == predictor && u.regime == *regime)
            .map(|u| u.dataset)
            .collect();
        for dataset in datasets {
            let us: Vec<&UnitMetrics> = units
                .iter()
                .filter(|u| &u.predictor == predictor && u.regime == *regime && u.dataset == dataset)
                .collect();
            let vals = |f: fn(&UnitMetrics) -> &UnitValue| -> Vec<Metric> {
                us.iter().map(|u| f(u).value.clone()).collect()
            };
            let mut cvs = vals(|u| &u.cv_target);
            cvs.extend(vals(|u| &u.cv_reference));
            aggregates.push(AggregateMetrics {
                predictor: predictor.clone(),
                dataset,
                regime: *regime,
                units: us.len(),
                gamma: Summary::of(&vals(|u| &u.gamma), kind),
                epsilon_target: Summary::of(&vals(|u| &u.epsilon_target), kind),
                epsilon_reference: Summary::of(&vals(|u| &u.epsilon_reference), kind),
                kappa: Summary::of(&vals(|u| &u.kappa), kind),
                cv: Summary::of(&cvs, kind),
            });
        }
    }
    aggregates.sort_by(|a, b| {
        (&a.predictor, a.dataset, a.regime).cmp(&(&b.predictor, b.dataset, b.regime))
    });

    let mut empirical_units = Vec::new();
    for (dataset, unit, specs) in &unit_order {
        let pairs: Vec<&Pair> = specs.iter().map(|s| &empirical[s.topic_id.as_str()]).collect();
        let kappa = if pooled(*dataset, cfg) {
            UnitValue {
                value: Pair::pool(&pairs).map_or(Metric::undefined("pool_failed"), |p| empirical_kappa(&p)),
                std: None,
            }
        } else {
            let ks: Vec<Metric> = pairs.iter().map(|p| empirical_kappa(p)).collect();
            UnitValue::over(&ks, kind)
        };
        let pooled_pair = Pair::pool(&pairs);
        let stats = |g| {
            pooled_pair
                .as_ref()
                .map_or_else(|| pairs[0].get(g).stats(kind), |p| p.get(g).stats(kind))
        };
        empirical_units.push(EmpiricalUnit {
            dataset: *dataset,
            unit: unit.clone(),
            target: stats(Group::Target),
            reference: stats(Group::Reference),
            kappa,
        });
    }
    let mut empirical_kappa_summary = BTreeMap::new();
    for d in empirical_units.iter().map(|e| e.dataset).collect::<BTreeSet<_>>() {
        let ks: Vec<Metric> = empirical_units
            .iter()
            .filter(|e| e.dataset == d)
            .map(|e| e.kappa.value.clone())
            .collect();
        empirical_kappa_summary.insert(
            d,
            if ks.len() == 1 {
                Summary::single(ks[0].clone())
            } else {
                Summary::of(&ks, kind)
            },
        );
    }

    MetricsReport {
        n_right_tail: cfg.n_right_tail,
        std_kind: kind,
        mfq_pooled_first: cfg.mfq_pooled_first,
        cells,
        units,
        aggregates,
        empirical: empirical_units,
        empirical_kappa: empirical_kappa_summary,
        missing_empirical,
        rejected_lines: data.reject_count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use repheur_core::survey::{EmpiricalCounts, Registry};

    fn counts(spec: &TopicSpec, c: &[u64]) -> ResponseCounts {
        ResponseCounts::from_counts(spec.scale.clone(), c.to_vec()).unwrap()
    }

    fn record(topic: &str, group: Group, v: Option<usize>, model: &str) -> ResponseRecord {
        ResponseRecord {
            topic_id: topic.into(),
            group,
            source: Source::Model,
            model_name: Some(model.into()),
            regime: Regime::Baseline,
            run_index: 0,
            raw_text: String::new(),
            scale_value: v,
            timestamp: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
            request_params: serde_json::json!({}),
        }
    }

    fn study(topics: &[&str]) -> (StudyConfig, StudyData) {
        let cfg = StudyConfig {
            topics: topics.iter().map(|s| s.to_string()).collect(),
            ..StudyConfig::default()
        };
        let data = StudyData::new(cfg.registry().unwrap());
        (cfg, data)
    }

    fn lc_empirical(data: &mut StudyData) {
        let spec = Registry::builtin().get("liberal_conservative").unwrap().clone();
        let mut e = EmpiricalCounts::default();
        e.counts.insert(("liberal_conservative".into(), Group::Target), counts(&spec, &[1, 1, 2, 10, 20, 30, 8]));
        e.counts.insert(("liberal_conservative".into(), Group::Reference), counts(&spec, &[8, 20, 30, 15, 5, 2, 1]));
        data.add_empirical(e);
    }

    #[test]
    fn identity_predictions_have_zero_deviation() {
        let (cfg, mut data) = study(&["liberal_conservative"]);
        lc_empirical(&mut data);
        let mut recs = Vec::new();
        for g in Group::BOTH {
            let c = data.empirical.get("liberal_conservative", g).unwrap().clone();
            for v in c.expand() {
                recs.push(record("liberal_conservative", g, Some(v as usize), "id"));
            }
        }
        recs.push(record("liberal_conservative", Group::Target, None, "id"));
        data.add_records(recs);
        let rep = compute_report(&cfg, &data);
        let c = &rep.cells[0];
        assert_eq!(c.gamma, Metric::Value(0.0));
        assert_eq!(c.epsilon_target, Metric::Value(0.0));
        assert_eq!(c.epsilon_reference, Metric::Value(0.0));
        assert_eq!(c.target.refusals, 1);
        assert!(c.complete);
        assert_eq!(c.means.predicted_target, Some(c.means.empirical_target));
        // identical distributions: κ equals the empirical κ
        assert_eq!(c.kappa, rep.empirical[0].kappa.value);
        assert_eq!(rep.aggregates.len(), 1);
        assert_eq!(rep.aggregates[0].gamma.count, 1);
    }

    #[test]
    fn means_only_cells_leave_distribution_metrics_undefined() {
        let (cfg, mut data) = study(&["liberal_conservative"]);
        let row = |m| MeanRow { mean: m, std: None, n_respondents: None };
        data.empirical_means.rows.insert(("liberal_conservative".into(), Group::Target), row(5.11));
        data.empirical_means.rows.insert(("liberal_conservative".into(), Group::Reference), row(3.46));
        let mut pm = repheur_core::survey::MeansTable::default();
        pm.rows.insert(("liberal_conservative".into(), Group::Target), row(6.0));
        pm.rows.insert(("liberal_conservative".into(), Group::Reference), row(2.0));
        data.predicted_means.push(crate::data::PredictedMeansTable {
            predictor: "gpt_4".into(),
            regime: Regime::Baseline,
            table: pm,
        });
        let rep = compute_report(&cfg, &data);
        let c = &rep.cells[0];
        assert!((c.gamma.value().unwrap() - 0.5393939).abs() < 1e-6);
        assert_eq!(c.kappa, Metric::undefined("means_only_prediction"));
        assert_eq!(c.epsilon_target, Metric::undefined("means_only_empirical"));
        assert_eq!(c.cv_target.cell(), "NA:means_only_prediction");
        assert_eq!(rep.empirical[0].kappa.value, Metric::undefined("means_only_empirical"));
    }

    #[test]
    fn degenerate_and_refusal_cells_are_annotated() {
        let (cfg, mut data) = study(&["liberal_conservative"]);
        let spec = Registry::builtin().get("liberal_conservative").unwrap().clone();
        let mut e = EmpiricalCounts::default();
        // identical empirical groups: γ denominator is zero
        for g in Group::BOTH {
            e.counts.insert(("liberal_conservative".into(), g), counts(&spec, &[1, 1, 1, 1, 1, 1, 1]));
        }
        data.add_empirical(e);
        let mut recs = vec![record("liberal_conservative", Group::Target, Some(5), "m")];
        recs.extend((0..3).map(|_| record("liberal_conservative", Group::Reference, None, "m")));
        data.add_records(recs);
        let rep = compute_report(&cfg, &data);
        let c = &rep.cells[0];
        assert_eq!(c.gamma, Metric::undefined("degenerate_denominator"));
        assert_eq!(c.kappa, Metric::undefined("no_responses"));
        assert!(!c.complete);
        assert_eq!(c.notes.len(), 1);
        assert_eq!(rep.aggregates[0].gamma.undefined, 1);
        assert_eq!(rep.aggregates[0].gamma.mean.cell(), "NA:all_undefined");
    }

    #[test]
    fn mfq_units_average_or_pool_questions() {
        let (mut cfg, mut data) = study(&["mfq_harm_1", "mfq_harm_2"]);
        let reg = Registry::builtin();
        let mut e = EmpiricalCounts::default();
        for id in ["mfq_harm_1", "mfq_harm_2"] {
            let spec = reg.get(id).unwrap();
            e.counts.insert((id.into(), Group::Target), counts(spec, &[1, 2, 3, 4, 5, 6]));
            e.counts.insert((id.into(), Group::Reference), counts(spec, &[6, 5, 4, 3, 2, 1]));
        }
        data.add_empirical(e);
        let mut recs = Vec::new();
        for (id, vt) in [("mfq_harm_1", 6), ("mfq_harm_2", 5)] {
            for _ in 0..4 {
                recs.push(record(id, Group::Target, Some(vt), "m"));
                recs.push(record(id, Group::Reference, Some(2), "m"));
            }
        }
        data.add_records(recs);

        let rep = compute_report(&cfg, &data);
        assert_eq!(rep.cells.len(), 2);
        assert_eq!(rep.units.len(), 1);
        let u = &rep.units[0];
        assert_eq!(u.unit, "harm");
        let g: Vec<f64> = rep.cells.iter().map(|c| c.gamma.value().unwrap()).collect();
        let mean = (g[0] + g[1]) / 2.0;
        assert!((u.gamma.value.value().unwrap() - mean).abs() < 1e-12);
        assert!(u.gamma.std.is_some());
        assert_eq!(u.target.mean, Metric::Value(5.5));

        cfg.mfq_pooled_first = true;
        let rep = compute_report(&cfg, &data);
        assert_eq!(rep.cells.len(), 1);
        assert_eq!(rep.cells[0].topic_id, "harm");
        assert_eq!(rep.cells[0].target.n, 8);
        assert!(rep.units[0].gamma.std.is_none());
    }

    #[test]
    fn empty_inputs_give_empty_report() {
        let (cfg, data) = study(&[]);
        let rep = compute_report(&cfg, &data);
        assert!(rep.is_empty());
        assert_eq!(rep.missing_empirical.len(), 40);
    }

    #[test]
    fn cell_formatting() {
        assert_eq!(fmt2(-0.001), "0.00");
        assert_eq!(fmt2(0.539), "0.54");
        assert_eq!(Metric::undefined("x").cell(), "NA:x");
    }
}
