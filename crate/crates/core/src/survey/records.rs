use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize};

use super::empirical::{IngestError, Reject};
use super::registry::Registry;
use crate::dist::{AttributeScale, DistError, ResponseCounts};
use crate::parse::{parse_scale, ParseMode};

/// Target (`X+`) or reference (`X-`) group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Target,
    Reference,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::Target, Group::Reference];
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::Target => "target",
            Group::Reference => "reference",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLabel {
    pub id: Group,
    pub display_name: String,
}

/// The study's target and reference groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPair {
    pub target: String,
    pub reference: String,
}

impl Default for GroupPair {
    fn default() -> Self {
        Self {
            target: "Republicans".into(),
            reference: "Democrats".into(),
        }
    }
}

impl GroupPair {
    pub fn label(&self, group: Group) -> GroupLabel {
        let display_name = match group {
            Group::Target => self.target.clone(),
            Group::Reference => self.reference.clone(),
        };
        GroupLabel {
            id: group,
            display_name,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    EmpiricalHuman,
    HumanPrediction,
    Model,
}

/// Prompt regime: plain question or one of the mitigation strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Baseline,
    Awareness,
    Reasoning,
    Feedback,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::Baseline,
        Regime::Awareness,
        Regime::Reasoning,
        Regime::Feedback,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Baseline => "baseline",
            Regime::Awareness => "awareness",
            Regime::Reasoning => "reasoning",
            Regime::Feedback => "feedback",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown regime `{s}`"))
    }
}

/// One raw answer, human or model, as persisted in the JSONL log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub topic_id: String,
    pub group: Group,
    pub source: Source,
    pub model_name: Option<String>,
    pub regime: Regime,
    pub run_index: u32,
    pub raw_text: String,
    pub scale_value: Option<usize>,
    pub timestamp: DateTime<Utc>,
    #[serde(default = "empty_object")]
    pub request_params: serde_json::Value,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

/// Distinguishes a missing key (outer `None`) from an explicit `null`.
fn present<'de, D, T>(d: D) -> Result<Option<Option<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(d).map(Some)
}

#[derive(Deserialize)]
struct RawRecord {
    topic_id: String,
    group: Group,
    source: Source,
    #[serde(default)]
    model_name: Option<String>,
    regime: Regime,
    run_index: u32,
    raw_text: String,
    #[serde(default, deserialize_with = "present")]
    scale_value: Option<Option<i64>>,
    timestamp: DateTime<Utc>,
    #[serde(default = "empty_object")]
    request_params: serde_json::Value,
}

/// Result of reading a response log: good records plus per-line rejects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogIngest {
    pub records: Vec<ResponseRecord>,
    pub rejects: Vec<Reject>,
    pub lines: usize,
}

impl LogIngest {
    /// Records without a usable scale value.
    pub fn refusals(&self) -> usize {
        self.records.iter().filter(|r| r.scale_value.is_none()).count()
    }
}

fn validate(raw: RawRecord, registry: &Registry, mode: ParseMode) -> Result<ResponseRecord, String> {
    let topic = registry
        .get(&raw.topic_id)
        .ok_or_else(|| format!("unknown topic `{}`", raw.topic_id))?;
    match (raw.source, &raw.model_name) {
        (Source::Model, None) => return Err("model records need a model_name".into()),
        (Source::EmpiricalHuman | Source::HumanPrediction, Some(_)) => {
            return Err("model_name is only allowed on model records".into())
        }
        _ => {}
    }
    if !raw.request_params.is_object() {
        return Err("request_params must be an object".into());
    }
    let scale_value = match raw.scale_value {
        // key absent: derive from the text
        None => parse_scale(&raw.raw_text, &topic.scale, mode),
        Some(None) => None,
        Some(Some(v)) => Some(
            topic
                .scale
                .check(v)
                .map_err(|e| format!("scale_value: {e}"))?,
        ),
    };
    Ok(ResponseRecord {
        topic_id: raw.topic_id,
        group: raw.group,
        source: raw.source,
        model_name: raw.model_name,
        regime: raw.regime,
        run_index: raw.run_index,
        raw_text: raw.raw_text,
        scale_value,
        timestamp: raw.timestamp,
        request_params: raw.request_params,
    })
}

/// Reads a JSONL response log. Malformed lines are collected as rejects and
/// ingestion continues; unparseable answers are kept with `scale_value = None`.
pub fn ingest_response_log<R: BufRead>(
    reader: R,
    registry: &Registry,
    mode: ParseMode,
) -> Result<LogIngest, IngestError> {
    let mut out = LogIngest::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        let parsed = serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|raw| validate(raw, registry, mode));
        match parsed {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.rejects.push(Reject {
                line: i + 1,
                reason,
            }),
        }
    }
    Ok(out)
}

pub fn write_response_log<W: Write>(mut w: W, records: &[ResponseRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Selects records by any combination of fields; `None` matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordFilter {
    pub topic_id: Option<String>,
    pub group: Option<Group>,
    pub source: Option<Source>,
    pub regime: Option<Regime>,
    pub model_name: Option<String>,
}

impl RecordFilter {
    pub fn topic(mut self, id: impl Into<String>) -> Self {
        self.topic_id = Some(id.into());
        self
    }

    pub fn group(mut self, g: Group) -> Self {
        self.group = Some(g);
        self
    }

    pub fn source(mut self, s: Source) -> Self {
        self.source = Some(s);
        self
    }

    pub fn regime(mut self, r: Regime) -> Self {
        self.regime = Some(r);
        self
    }

    pub fn model(mut self, name: impl Into<String>) -> Self {
        self.model_name = Some(name.into());
        self
    }

    pub fn matches(&self, r: &ResponseRecord) -> bool {
        self.topic_id.as_ref().is_none_or(|t| *t == r.topic_id)
            && self.group.is_none_or(|g| g == r.group)
            && self.source.is_none_or(|s| s == r.source)
            && self.regime.is_none_or(|x| x == r.regime)
            && self
                .model_name
                .as_ref()
                .is_none_or(|m| r.model_name.as_deref() == Some(m.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    pub counts: ResponseCounts,
    pub refusal_count: u64,
}

/// Tallies the scale values of matching records; absent values count as
/// refusals.
pub fn records_to_counts(
    records: &[ResponseRecord],
    filter: &RecordFilter,
    scale: &AttributeScale,
) -> Result<Tally, DistError> {
    let mut counts = ResponseCounts::zeros(scale.clone());
    let mut refusal_count = 0;
    for r in records.iter().filter(|r| filter.matches(r)) {
        match r.scale_value {
            Some(v) => counts.add(v)?,
            None => refusal_count += 1,
        }
    }
    Ok(Tally {
        counts,
        refusal_count,
    })
}
