//! Party-conditioned misinformation detection: prompts, binary answer
//! parsing and RR / accuracy / false-positive scoring.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::survey::Reject;

pub const MISINFO_INSTRUCTION: &str = "The task is to detect the authenticity of a statement. Below is the statement. If the statement is true, respond with 1; if it's false, respond with 0. Do not use any other words in your reply, only 1 or 0.";

#[derive(Debug, Error)]
pub enum MisinfoError {
    #[error("variant `{variant}` needs the `{field}` field")]
    MissingField { variant: Variant, field: &'static str },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    R,
    D,
}

impl Party {
    pub fn name(&self) -> &'static str {
        match self {
            Party::R => "Republican",
            Party::D => "Democrat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementRecord {
    pub statement: String,
    /// `true` for authentic statements.
    pub label: bool,
    pub speaker: Option<String>,
    pub party: Party,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    WithSpeaker,
    WithParty,
    WithPartySpeaker,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Base,
        Variant::WithSpeaker,
        Variant::WithParty,
        Variant::WithPartySpeaker,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::WithSpeaker => "with_speaker",
            Variant::WithParty => "with_party",
            Variant::WithPartySpeaker => "with_party_speaker",
        }
    }

    fn speaker(&self) -> bool {
        matches!(self, Variant::WithSpeaker | Variant::WithPartySpeaker)
    }

    fn party(&self) -> bool {
        matches!(self, Variant::WithParty | Variant::WithPartySpeaker)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Instruction, then the statement, then speaker and party lines as the
/// variant requires.
pub fn build_misinfo_prompt(rec: &StatementRecord, variant: Variant) -> Result<String, MisinfoError> {
    let mut text = format!("{MISINFO_INSTRUCTION}\n\nStatement: {}", rec.statement);
    if variant.speaker() {
        let speaker = rec
            .speaker
            .as_deref()
            .filter(|s| !s.trim().is_empty())
            .ok_or(MisinfoError::MissingField {
                variant,
                field: "speaker",
            })?;
        text.push_str(&format!("\nSpeaker: {speaker}"));
    }
    if variant.party() {
        text.push_str(&format!("\nParty: {}", rec.party.name()));
    }
    Ok(text)
}

/// `"1"` or `"0"` after trimming; anything else is no answer.
pub fn parse_binary(raw_text: &str) -> Option<bool> {
    match raw_text.trim() {
        "1" => Some(true),
        "0" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slice {
    Overall,
    PartyR,
    PartyD,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::Overall, Slice::PartyD, Slice::PartyR];

    pub fn as_str(&self) -> &'static str {
        match self {
            Slice::Overall => "overall",
            Slice::PartyR => "party_R",
            Slice::PartyD => "party_D",
        }
    }

    pub fn contains(&self, party: Party) -> bool {
        match self {
            Slice::Overall => true,
            Slice::PartyR => party == Party::R,
            Slice::PartyD => party == Party::D,
        }
    }
}

/// Denominator of the false-positive rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FpNorm {
    /// False positives over all answered items.
    #[default]
    Answered,
    /// False positives over answered items labeled false.
    AnsweredNegatives,
}

/// Rates are `None` when their denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisinfoMetrics {
    pub n_total: usize,
    pub n_answered: usize,
    pub response_ratio: Option<f64>,
    pub accuracy: Option<f64>,
    pub false_positive_rate: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn score_misinfo(
    predictions: &[(StatementRecord, Option<bool>)],
    slice: Slice,
    fp_norm: FpNorm,
) -> MisinfoMetrics {
    let (mut total, mut answered, mut correct, mut fp, mut negatives) = (0, 0, 0, 0, 0);
    for (rec, pred) in predictions.iter().filter(|(r, _)| slice.contains(r.party)) {
        total += 1;
        let Some(p) = *pred else { continue };
        answered += 1;
        correct += usize::from(p == rec.label);
        fp += usize::from(p && !rec.label);
        negatives += usize::from(!rec.label);
    }
    let fp_den = match fp_norm {
        FpNorm::Answered => answered,
        FpNorm::AnsweredNegatives => negatives,
    };
    MisinfoMetrics {
        n_total: total,
        n_answered: answered,
        response_ratio: ratio(answered, total),
        accuracy: ratio(correct, answered),
        false_positive_rate: ratio(fp, fp_den),
    }
}

#[derive(Deserialize)]
struct RawStatement {
    statement: String,
    label: String,
    #[serde(default)]
    speaker: Option<String>,
    party: String,
}

/// Statements loaded from `statement,label,speaker,party`, with row rejects.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StatementSet {
    pub statements: Vec<StatementRecord>,
    pub rejects: Vec<Reject>,
}

pub fn load_statements_csv<R: Read>(reader: R) -> Result<StatementSet, MisinfoError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = StatementSet::default();
    for (i, row) in rdr.deserialize::<RawStatement>().enumerate() {
        let line = i + 2;
        let parsed = row.map_err(|e| e.to_string()).and_then(|raw| {
            if raw.statement.trim().is_empty() {
                return Err("empty statement".to_string());
            }
            let label = match raw.label.trim().to_ascii_lowercase().as_str() {
                "true" => true,
                "false" => false,
                other => return Err(format!("label `{other}` is not true/false")),
            };
            let party = match raw.party.trim() {
                "R" => Party::R,
                "D" => Party::D,
                other => return Err(format!("party `{other}` is not R/D")),
            };
            Ok(StatementRecord {
                statement: raw.statement,
                label,
                speaker: raw.speaker.filter(|s| !s.trim().is_empty()),
                party,
            })
        });
        match parsed {
            Ok(s) => out.statements.push(s),
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub variant: Variant,
    pub slice: Slice,
    pub metrics: MisinfoMetrics,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA:empty".to_string(), |x| format!("{x:.3}"))
}

/// One row per (model, variant, slice).
pub fn write_metrics_csv<W: Write>(w: W, rows: &[MetricsRow]) -> Result<(), MisinfoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "model",
        "variant",
        "slice",
        "n_total",
        "n_answered",
        "rr_percent",
        "accuracy",
        "fp",
    ])?;
    for r in rows {
        let m = &r.metrics;
        wtr.write_record([
            r.model.clone(),
            r.variant.to_string(),
            r.slice.as_str().to_string(),
            m.n_total.to_string(),
            m.n_answered.to_string(),
            m.response_ratio
                .map_or_else(|| "NA:empty".to_string(), |x| format!("{:.2}", x * 100.0)),
            cell(m.accuracy),
            cell(m.false_positive_rate),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
