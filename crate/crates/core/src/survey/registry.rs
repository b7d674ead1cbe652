use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{AttributeScale, Direction, DistError};

const BUILTIN_ANES: &str = include_str!("../../registry/anes.toml");
const BUILTIN_MFQ: &str = include_str!("../../registry/mfq.toml");

/// Placeholder substituted with a group's display name.
pub const PARTY_PLACEHOLDER: &str = "{Party}";

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("reading registry {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing registry {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("topic `{topic}` field `{field}`: {message}")]
    Invalid {
        topic: String,
        field: &'static str,
        message: String,
    },
    #[error("duplicate topic id `{0}`")]
    DuplicateTopicId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Anes,
    Mfq,
    Custom,
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dataset::Anes => "ANES",
            Dataset::Mfq => "MFQ",
            Dataset::Custom => "custom",
        })
    }
}

impl std::str::FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "anes" => Ok(Dataset::Anes),
            "mfq" => Ok(Dataset::Mfq),
            "custom" => Ok(Dataset::Custom),
            other => Err(format!("unknown dataset `{other}`")),
        }
    }
}

/// One prediction question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub topic_id: String,
    pub dataset: Dataset,
    pub title: String,
    pub question_text: String,
    pub scale: AttributeScale,
    /// Empirical answers are coded opposite to the prompt and get reflected
    /// at ingest.
    pub reversed: bool,
    pub prompt_suffix: String,
    /// Reporting unit the topic rolls up into (MFQ foundation). `None`
    /// means the topic is its own unit.
    pub unit: Option<String>,
}

impl TopicSpec {
    pub fn unit_id(&self) -> &str {
        self.unit.as_deref().unwrap_or(&self.topic_id)
    }
}

/// `value` if not reversed, else `n + 1 - value`.
pub fn apply_reversal(value: i64, spec: &TopicSpec) -> Result<usize, DistError> {
    let v = spec.scale.check(value)?;
    if spec.reversed {
        spec.scale.reflect(v)
    } else {
        Ok(v)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegistry {
    #[serde(default)]
    topic: Vec<RawTopic>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopic {
    id: String,
    dataset: Dataset,
    title: Option<String>,
    question_text: String,
    n: usize,
    #[serde(default)]
    reversed: bool,
    prompt_suffix: String,
    labels: Option<Vec<String>>,
    direction: Option<Direction>,
    unit: Option<String>,
}

/// Validated, ordered collection of topics with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    topics: Vec<TopicSpec>,
    index: HashMap<String, usize>,
}

impl Registry {
    pub fn from_topics(topics: Vec<TopicSpec>) -> Result<Self, RegistryError> {
        let mut index = HashMap::with_capacity(topics.len());
        for (i, t) in topics.iter().enumerate() {
            if index.insert(t.topic_id.clone(), i).is_some() {
                return Err(RegistryError::DuplicateTopicId(t.topic_id.clone()));
            }
        }
        Ok(Self { topics, index })
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, RegistryError> {
        let raw: RawRegistry = toml::from_str(text).map_err(|e| RegistryError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        let topics = raw
            .topic
            .into_iter()
            .map(convert)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_topics(topics)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// The shipped ANES (10 topics) and MFQ (30 questions) prompts.
    pub fn builtin() -> Self {
        let mut topics = Self::builtin_anes().topics;
        topics.extend(Self::builtin_mfq().topics);
        Self::from_topics(topics).expect("built-in registry ids are unique")
    }

    pub fn builtin_anes() -> Self {
        Self::from_toml_str(BUILTIN_ANES, "builtin:anes").expect("built-in ANES registry")
    }

    pub fn builtin_mfq() -> Self {
        Self::from_toml_str(BUILTIN_MFQ, "builtin:mfq").expect("built-in MFQ registry")
    }

    pub fn get(&self, topic_id: &str) -> Option<&TopicSpec> {
        self.index.get(topic_id).map(|&i| &self.topics[i])
    }

    pub fn topics(&self) -> &[TopicSpec] {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn by_dataset(&self, dataset: Dataset) -> impl Iterator<Item = &TopicSpec> {
        self.topics.iter().filter(move |t| t.dataset == dataset)
    }

    /// Keeps only the topics matching `keep`, preserving order.
    pub fn filtered(&self, keep: impl Fn(&TopicSpec) -> bool) -> Self {
        let topics = self.topics.iter().filter(|t| keep(t)).cloned().collect();
        Self::from_topics(topics).expect("subset of unique ids")
    }
}

fn convert(raw: RawTopic) -> Result<TopicSpec, RegistryError> {
    let invalid = |field, message: String| RegistryError::Invalid {
        topic: raw.id.clone(),
        field,
        message,
    };
    if raw.id.trim().is_empty() {
        return Err(invalid("id", "must not be empty".into()));
    }
    let mut scale = AttributeScale::new(raw.n).map_err(|e| invalid("n", e.to_string()))?;
    if let Some(labels) = raw.labels.clone() {
        scale = scale
            .with_labels(labels)
            .map_err(|e| invalid("labels", e.to_string()))?;
    }
    if let Some(d) = raw.direction {
        scale = scale.with_direction(d);
    }
    if raw.question_text.trim().is_empty() {
        return Err(invalid("question_text", "must not be empty".into()));
    }
    Ok(TopicSpec {
        title: raw.title.clone().unwrap_or_else(|| raw.id.clone()),
        topic_id: raw.id,
        dataset: raw.dataset,
        question_text: raw.question_text,
        scale,
        reversed: raw.reversed,
        prompt_suffix: raw.prompt_suffix,
        unit: raw.unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_anes_shape() {
        let r = Registry::builtin_anes();
        assert_eq!(r.len(), 10);
        for t in r.topics() {
            let expected = if t.topic_id == "abortion" { 4 } else { 7 };
            assert_eq!(t.scale.n(), expected, "{}", t.topic_id);
            assert!(t.question_text.contains(PARTY_PLACEHOLDER));
            assert_eq!(t.prompt_suffix, r#"Please start your response with "Scale: __""#);
        }
        let reversed: Vec<_> = r
            .topics()
            .iter()
            .filter(|t| t.reversed)
            .map(|t| t.topic_id.as_str())
            .collect();
        assert_eq!(reversed, ["government_services", "abortion"]);
    }

    #[test]
    fn builtin_mfq_shape() {
        let r = Registry::builtin_mfq();
        assert_eq!(r.len(), 30);
        let mut per_unit: HashMap<&str, usize> = HashMap::new();
        for t in r.topics() {
            assert_eq!(t.scale.n(), 6);
            assert!(t.question_text.contains(PARTY_PLACEHOLDER));
            *per_unit.entry(t.unit_id()).or_default() += 1;
            let should_reverse = matches!(t.unit_id(), "harm" | "fairness");
            assert_eq!(t.reversed, should_reverse, "{}", t.topic_id);
        }
        assert_eq!(per_unit.len(), 5);
        assert!(per_unit.values().all(|&c| c == 6));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"
[[topic]]
id = "a"
dataset = "custom"
question_text = "Where is the {Party}?"
n = 5
prompt_suffix = "x"

[[topic]]
id = "a"
dataset = "custom"
question_text = "Again the {Party}?"
n = 5
prompt_suffix = "x"
"#;
        assert!(matches!(
            Registry::from_toml_str(text, "test"),
            Err(RegistryError::DuplicateTopicId(id)) if id == "a"
        ));
    }

    #[test]
    fn parse_errors_carry_location_and_field() {
        let err = Registry::from_toml_str("[[topic]]\nid = 3\n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml"), "{msg}");
        assert!(msg.contains("line 2") || msg.contains("2:"), "{msg}");

        let text = "[[topic]]\nid = \"t\"\ndataset = \"custom\"\nquestion_text = \"q {Party}\"\nn = 1\nprompt_suffix = \"\"\n";
        assert!(matches!(
            Registry::from_toml_str(text, "t"),
            Err(RegistryError::Invalid { field: "n", .. })
        ));
    }

    #[test]
    fn reversal() {
        let r = Registry::builtin_anes();
        let gs = r.get("government_services").unwrap();
        let lc = r.get("liberal_conservative").unwrap();
        let ab = r.get("abortion").unwrap();
        assert_eq!(apply_reversal(2, gs).unwrap(), 6);
        assert_eq!(apply_reversal(4, gs).unwrap(), 4);
        assert_eq!(apply_reversal(1, ab).unwrap(), 4);
        assert_eq!(apply_reversal(2, lc).unwrap(), 2);
        assert!(apply_reversal(8, gs).is_err());
        assert!(apply_reversal(0, lc).is_err());
    }
}
