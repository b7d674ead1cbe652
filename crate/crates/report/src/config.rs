use std::path::{Path, PathBuf};

use repheur_core::survey::{Dataset, GroupPair, Regime, Registry};
use repheur_core::{ParseMode, StdKind, DEFAULT_TOL_DEN};
use repheur_harness::ModelSpec;
use serde::{Deserialize, Serialize};

use crate::ReportError;

pub const SCHEMA_VERSION: u32 = 1;

fn default_n_right_tail() -> usize {
    2
}

fn default_min_parse_rate() -> f64 {
    0.5
}

fn default_regimes() -> Vec<Regime> {
    Regime::ALL.to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Denominators with magnitude at or below this are degenerate.
    #[serde(default = "default_tol_den")]
    pub den: f64,
}

fn default_tol_den() -> f64 {
    DEFAULT_TOL_DEN
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            den: DEFAULT_TOL_DEN,
        }
    }
}

/// A predicted-means file standing in for one predictor's responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictedMeans {
    pub model: String,
    pub path: PathBuf,
    #[serde(default = "baseline")]
    pub regime: Regime,
}

fn baseline() -> Regime {
    Regime::Baseline
}

/// Study configuration, read from TOML. Relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema_version: u32,
    /// Topic registry; the built-in ANES + MFQ registry when absent.
    #[serde(default)]
    pub registry_path: Option<PathBuf>,
    /// Restrict to these datasets (all when empty).
    #[serde(default)]
    pub datasets: Vec<Dataset>,
    /// Restrict to these topic ids (all when empty).
    #[serde(default)]
    pub topics: Vec<String>,
    /// Per-respondent empirical CSVs.
    #[serde(default)]
    pub empirical_paths: Vec<PathBuf>,
    /// Aggregated empirical means (mean-based metrics only).
    #[serde(default)]
    pub empirical_means_path: Option<PathBuf>,
    #[serde(default)]
    pub log_paths: Vec<PathBuf>,
    #[serde(default)]
    pub predicted_means: Vec<PredictedMeans>,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    #[serde(default)]
    pub groups: GroupPair,
    #[serde(default = "default_regimes")]
    pub regimes: Vec<Regime>,
    #[serde(default = "default_n_right_tail")]
    pub n_right_tail: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Pool MFQ questions within a foundation before estimating.
    #[serde(default)]
    pub mfq_pooled_first: bool,
    #[serde(default)]
    pub std_kind: StdKind,
    #[serde(default)]
    pub parse_mode: ParseMode,
    #[serde(default = "default_min_parse_rate")]
    pub min_parse_rate: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        toml::from_str(&format!("schema_version = {SCHEMA_VERSION}")).expect("defaults parse")
    }
}

impl StudyConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ReportError> {
        let mut cfg: StudyConfig =
            toml::from_str(text).map_err(|e| ReportError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ReportError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.registry_path.iter_mut().for_each(fix);
        self.empirical_paths.iter_mut().for_each(fix);
        self.empirical_means_path.iter_mut().for_each(fix);
        self.log_paths.iter_mut().for_each(fix);
        self.predicted_means.iter_mut().for_each(|p| fix(&mut p.path));
    }

    /// The registry before dataset and topic selection.
    pub fn full_registry(&self) -> Result<Registry, ReportError> {
        Ok(match &self.registry_path {
            Some(p) => Registry::load(p)?,
            None => Registry::builtin(),
        })
    }

    /// The registry restricted to the configured datasets and topics.
    pub fn registry(&self) -> Result<Registry, ReportError> {
        let full = self.full_registry()?;
        for id in &self.topics {
            if full.get(id).is_none() {
                return Err(ReportError::Config(format!("unknown topic `{id}`")));
            }
        }
        let reg = full.filtered(|t| {
            (self.datasets.is_empty() || self.datasets.contains(&t.dataset))
                && (self.topics.is_empty() || self.topics.contains(&t.topic_id))
        });
        let min_n = reg.topics().iter().map(|t| t.scale.n()).min();
        if self.n_right_tail == 0 || min_n.is_some_and(|n| self.n_right_tail > n) {
            return Err(ReportError::Config(format!(
                "n_right_tail {} must be between 1 and the smallest scale size {}",
                self.n_right_tail,
                min_n.unwrap_or(0)
            )));
        }
        Ok(reg)
    }
}
