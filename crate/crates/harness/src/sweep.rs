use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};

use repheur_core::coefficient_of_variation;
use repheur_core::survey::{ingest_response_log, Group, Registry, Regime, ResponseRecord, Source};
use serde::Serialize;

use crate::runner::{run_experiment, RunConfig, RunSummary};
use crate::HarnessError;

pub const DEFAULT_SWEEP_REPETITIONS: u32 = 10;

/// One row of the temperature table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub temperature: f64,
    /// CV per (topic, group) cell, averaged over cells.
    pub cv: Option<f64>,
    /// Predicted minus empirical mean, averaged over topics.
    pub diff_target: Option<f64>,
    pub diff_reference: Option<f64>,
    pub cells: usize,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Builds the table from logged records of `model` at each temperature.
pub fn sweep_table(
    records: &[ResponseRecord],
    model: &str,
    temperatures: &[f64],
    empirical: Option<&BTreeMap<String, (f64, f64)>>,
) -> Vec<SweepRow> {
    temperatures
        .iter()
        .map(|&t| {
            let mut cells: BTreeMap<(&str, Group), Vec<f64>> = BTreeMap::new();
            for r in records.iter().filter(|r| {
                r.source == Source::Model
                    && r.regime == Regime::Baseline
                    && r.model_name.as_deref() == Some(model)
                    && r.request_params.get("temperature").and_then(|v| v.as_f64()) == Some(t)
            }) {
                if let Some(v) = r.scale_value {
                    cells.entry((r.topic_id.as_str(), r.group)).or_default().push(v as f64);
                }
            }
            let cvs: Vec<f64> = cells
                .values()
                .filter_map(|v| coefficient_of_variation(v).ok())
                .collect();
            let diff = |group: Group| {
                let emp = empirical?;
                let diffs: Vec<f64> = cells
                    .iter()
                    .filter(|((_, g), _)| *g == group)
                    .filter_map(|((topic, _), vals)| {
                        let (et, er) = emp.get(*topic)?;
                        let e = if group == Group::Target { et } else { er };
                        Some(mean(vals)? - e)
                    })
                    .collect();
                mean(&diffs)
            };
            SweepRow {
                temperature: t,
                cv: mean(&cvs),
                diff_target: diff(Group::Target),
                diff_reference: diff(Group::Reference),
                cells: cvs.len(),
            }
        })
        .collect()
}

/// Runs the baseline grid of the single configured model once per
/// temperature, then tabulates CV and mean differences from the log.
pub async fn temperature_sweep(
    base: &RunConfig,
    temperatures: &[f64],
    empirical: Option<&BTreeMap<String, (f64, f64)>>,
) -> Result<(Vec<SweepRow>, Vec<RunSummary>), HarnessError> {
    let [model] = base.models.as_slice() else {
        return Err(HarnessError::InvalidSpec(
            "a temperature sweep takes exactly one model".into(),
        ));
    };
    let mut summaries = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        let mut cfg = base.clone();
        cfg.models = vec![model.clone().with_temperature(t)];
        cfg.regimes = vec![Regime::Baseline];
        summaries.push(run_experiment(&cfg).await?);
    }
    if base.dry_run {
        return Ok((Vec::new(), summaries));
    }
    let registry = Registry::from_topics(base.topics.clone())?;
    let log = ingest_response_log(
        BufReader::new(File::open(&base.log_path)?),
        &registry,
        base.parse_mode,
    )?;
    Ok((sweep_table(&log.records, &model.name, temperatures, empirical), summaries))
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> csv::Result<()> {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA:no_data".to_string(), |x| format!("{x:.3}"));
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["temperature", "cv", "diff_d", "diff_r", "cells"])?;
    for r in rows {
        wtr.write_record([
            r.temperature.to_string(),
            fmt(r.cv),
            fmt(r.diff_reference),
            fmt(r.diff_target),
            r.cells.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
