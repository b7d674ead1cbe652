use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::records::Group;
use super::registry::{apply_reversal, Registry};
use crate::dist::ResponseCounts;
use crate::estimators::MeanPair;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}` in header")]
    MissingColumn(&'static str),
}

/// A row or line that could not be used, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

/// Per-(topic, group) tallies from a per-respondent file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmpiricalCounts {
    pub counts: BTreeMap<(String, Group), ResponseCounts>,
    /// Rows whose group is neither target nor reference.
    pub dropped: usize,
    pub rejects: Vec<Reject>,
    pub rows: usize,
}

impl EmpiricalCounts {
    pub fn get(&self, topic_id: &str, group: Group) -> Option<&ResponseCounts> {
        self.counts.get(&(topic_id.to_string(), group))
    }

    pub fn tallied(&self) -> usize {
        self.counts.values().map(|c| c.total() as usize).sum()
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        let mut seen: Vec<&str> = self.counts.keys().map(|(t, _)| t.as_str()).collect();
        seen.dedup();
        seen.into_iter()
    }
}

fn group_code(code: &str) -> Option<Group> {
    match code.trim().to_ascii_lowercase().as_str() {
        "r" | "target" => Some(Group::Target),
        "d" | "reference" => Some(Group::Reference),
        _ => None,
    }
}

fn column(headers: &csv::StringRecord, name: &'static str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or(IngestError::MissingColumn(name))
}

fn line_of(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(fallback)
}

/// Reads `topic_id,group,value` rows. Values are reflected for reversed
/// topics; groups other than `R`/`D` are dropped and counted.
pub fn ingest_empirical_csv<R: Read>(
    reader: R,
    registry: &Registry,
) -> Result<EmpiricalCounts, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let (ti, gi, vi) = (
        column(&headers, "topic_id")?,
        column(&headers, "group")?,
        column(&headers, "value")?,
    );
    let mut out = EmpiricalCounts::default();
    for (i, row) in rdr.records().enumerate() {
        out.rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject {
                    line: i + 2,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = line_of(&row, i + 2);
        let field = |k: usize| row.get(k).unwrap_or("").trim();
        let topic_id = field(ti);
        let tallied = (|| {
            let spec = registry
                .get(topic_id)
                .ok_or_else(|| format!("unknown topic `{topic_id}`"))?;
            let raw = field(vi)
                .parse::<i64>()
                .map_err(|_| format!("value `{}` is not an integer", field(vi)))?;
            let Some(group) = group_code(field(gi)) else {
                return Ok(None);
            };
            let v = apply_reversal(raw, spec).map_err(|e| format!("value out of scale: {e}"))?;
            Ok::<_, String>(Some((spec, group, v)))
        })();
        match tallied {
            Ok(Some((spec, group, v))) => out
                .counts
                .entry((topic_id.to_string(), group))
                .or_insert_with(|| ResponseCounts::zeros(spec.scale.clone()))
                .add(v)
                .expect("value checked against the topic scale"),
            Ok(None) => out.dropped += 1,
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub mean: f64,
    pub std: Option<f64>,
    pub n_respondents: Option<u64>,
}

/// Pre-aggregated group means, keyed by (topic, group). Only mean-based
/// metrics can be computed from these.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeansTable {
    pub rows: BTreeMap<(String, Group), MeanRow>,
    pub rejects: Vec<Reject>,
}

impl MeansTable {
    pub fn get(&self, topic_id: &str, group: Group) -> Option<&MeanRow> {
        self.rows.get(&(topic_id.to_string(), group))
    }

    /// `(target, reference)` means when both are present.
    pub fn means(&self, topic_id: &str) -> Option<(f64, f64)> {
        Some((
            self.get(topic_id, Group::Target)?.mean,
            self.get(topic_id, Group::Reference)?.mean,
        ))
    }

    /// Empirical means from `self` paired with predictions from `predicted`.
    pub fn pair_with(&self, predicted: &MeansTable, topic_id: &str) -> Option<MeanPair> {
        let (t, r) = self.means(topic_id)?;
        let (pt, pr) = predicted.means(topic_id)?;
        Some(MeanPair::empirical(t, r).with_predicted(Some(pt), Some(pr)))
    }

    pub fn topics(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.rows.keys().map(|(t, _)| t.as_str()).collect();
        ids.dedup();
        ids
    }
}

fn optional<T: std::str::FromStr>(s: &str) -> Result<Option<T>, String> {
    let s = s.trim();
    if s.is_empty() || s == "-" || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| format!("cannot parse `{s}`"))
}

/// Reads `topic_id,group,mean,std,n_respondents` rows. Means are taken as
/// already aligned to the higher-is-target convention.
pub fn ingest_means_csv<R: Read>(reader: R, registry: &Registry) -> Result<MeansTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let (ti, gi, mi) = (
        column(&headers, "topic_id")?,
        column(&headers, "group")?,
        column(&headers, "mean")?,
    );
    let si = column(&headers, "std").ok();
    let ni = column(&headers, "n_respondents").ok();
    let mut out = MeansTable::default();
    for (i, row) in rdr.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject {
                    line: i + 2,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = line_of(&row, i + 2);
        let field = |k: Option<usize>| k.and_then(|k| row.get(k)).unwrap_or("").trim();
        let parsed = (|| {
            let topic_id = field(Some(ti));
            let spec = registry
                .get(topic_id)
                .ok_or_else(|| format!("unknown topic `{topic_id}`"))?;
            let group = group_code(field(Some(gi)))
                .ok_or_else(|| format!("unknown group `{}`", field(Some(gi))))?;
            let mean: f64 = field(Some(mi))
                .parse()
                .map_err(|_| format!("mean `{}` is not a number", field(Some(mi))))?;
            let n = spec.scale.n() as f64;
            if !(1.0..=n).contains(&mean) {
                return Err(format!("mean {mean} outside [1, {n}]"));
            }
            let row = MeanRow {
                mean,
                std: optional(field(si))?,
                n_respondents: optional(field(ni))?,
            };
            Ok::<_, String>(((topic_id.to_string(), group), row))
        })();
        match parsed {
            Ok((key, row)) => {
                out.rows.insert(key, row);
            }
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    Ok(out)
}
