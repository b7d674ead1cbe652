use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use repheur_core::survey::{
    ingest_empirical_csv, ingest_means_csv, ingest_response_log, EmpiricalCounts, MeansTable,
    Regime, Registry, Reject, ResponseRecord, Source,
};
use serde::Serialize;

use crate::config::StudyConfig;
use crate::ReportError;

/// Rejected lines of one input file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileRejects {
    pub path: String,
    pub rejects: Vec<Reject>,
}

/// Predicted means for one predictor and regime.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedMeansTable {
    pub predictor: String,
    pub regime: Regime,
    pub table: MeansTable,
}

/// Everything the report is computed from.
#[derive(Debug, Clone, Default)]
pub struct StudyData {
    pub registry: Registry,
    pub empirical: EmpiricalCounts,
    pub empirical_means: MeansTable,
    pub records: Vec<ResponseRecord>,
    pub predicted_means: Vec<PredictedMeansTable>,
    pub rejects: Vec<FileRejects>,
}

impl StudyData {
    pub fn new(registry: Registry) -> Self {
        Self {
            registry,
            ..Self::default()
        }
    }

    pub fn reject_count(&self) -> usize {
        self.rejects.iter().map(|f| f.rejects.len()).sum()
    }

    /// Drops data for topics outside the registry.
    pub fn retain_registered(&mut self) {
        let reg = &self.registry;
        self.empirical.counts.retain(|(t, _), _| reg.get(t).is_some());
        self.empirical_means.rows.retain(|(t, _), _| reg.get(t).is_some());
        self.records.retain(|r| reg.get(&r.topic_id).is_some());
        for pm in &mut self.predicted_means {
            pm.table.rows.retain(|(t, _), _| reg.get(t).is_some());
        }
    }

    /// Adds per-respondent tallies, merging with what is already present.
    pub fn add_empirical(&mut self, counts: EmpiricalCounts) {
        for (key, c) in counts.counts {
            match self.empirical.counts.get_mut(&key) {
                Some(existing) => existing.merge(&c).expect("registry fixes the scale"),
                None => {
                    self.empirical.counts.insert(key, c);
                }
            }
        }
        self.empirical.dropped += counts.dropped;
        self.empirical.rows += counts.rows;
        self.empirical.rejects.extend(counts.rejects);
    }

    /// Adds log records; `empirical_human` records count as empirical data.
    pub fn add_records(&mut self, records: Vec<ResponseRecord>) {
        for r in records {
            if r.source != Source::EmpiricalHuman {
                self.records.push(r);
                continue;
            }
            let (Some(v), Some(spec)) = (r.scale_value, self.registry.get(&r.topic_id)) else {
                continue;
            };
            let scale = spec.scale.clone();
            self.empirical
                .counts
                .entry((r.topic_id.clone(), r.group))
                .or_insert_with(|| repheur_core::ResponseCounts::zeros(scale))
                .add(v)
                .expect("ingest checked the range");
        }
    }
}

fn open(path: &Path) -> Result<File, ReportError> {
    File::open(path).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn ingest_err(path: &Path) -> impl FnOnce(repheur_core::survey::IngestError) -> ReportError + '_ {
    move |e| ReportError::Ingest {
        path: path.display().to_string(),
        source: e,
    }
}

/// Reads every input named by the config. Line-level problems are collected
/// as rejects; unreadable files are errors.
pub fn load_study(cfg: &StudyConfig) -> Result<StudyData, ReportError> {
    // ingest against every known topic so unselected topics are not rejects
    let full = cfg.full_registry()?;
    let mut data = StudyData::new(full);
    let mut rejects = Vec::new();

    for p in &cfg.empirical_paths {
        let mut counts = ingest_empirical_csv(open(p)?, &data.registry).map_err(ingest_err(p))?;
        note(&mut rejects, p, std::mem::take(&mut counts.rejects));
        data.add_empirical(counts);
    }
    if let Some(p) = &cfg.empirical_means_path {
        let mut table = ingest_means_csv(open(p)?, &data.registry).map_err(ingest_err(p))?;
        note(&mut rejects, p, std::mem::take(&mut table.rejects));
        data.empirical_means = table;
    }
    for p in &cfg.log_paths {
        // a log named in the config may not have been written yet
        if !p.exists() {
            log::warn!("{}: no such log yet, skipping", p.display());
            continue;
        }
        let log = ingest_response_log(BufReader::new(open(p)?), &data.registry, cfg.parse_mode)
            .map_err(ingest_err(p))?;
        note(&mut rejects, p, log.rejects);
        data.add_records(log.records);
    }
    for pm in &cfg.predicted_means {
        let mut table = ingest_means_csv(open(&pm.path)?, &data.registry).map_err(ingest_err(&pm.path))?;
        note(&mut rejects, &pm.path, std::mem::take(&mut table.rejects));
        data.predicted_means.push(PredictedMeansTable {
            predictor: pm.model.clone(),
            regime: pm.regime,
            table,
        });
    }
    data.rejects = rejects;
    data.registry = cfg.registry()?;
    data.retain_registered();
    Ok(data)
}

fn note(out: &mut Vec<FileRejects>, path: &Path, rejects: Vec<Reject>) {
    if !rejects.is_empty() {
        log::warn!("{}: {} rejected lines", path.display(), rejects.len());
        out.push(FileRejects {
            path: path.display().to_string(),
            rejects,
        });
    }
}
