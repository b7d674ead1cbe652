use serde::{Deserialize, Serialize};

use crate::HarnessError;

fn default_max_retries() -> u32 {
    3
}

fn default_rpm() -> u32 {
    60
}

fn one() -> f64 {
    1.0
}

/// Access settings for one chat-completions model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub endpoint_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "one")]
    pub top_p: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, endpoint_url: impl Into<String>, api_key_env: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            endpoint_url: endpoint_url.into(),
            api_key_env: api_key_env.into(),
            temperature: 1.0,
            top_p: 1.0,
            max_retries: default_max_retries(),
            requests_per_minute: default_rpm(),
        }
    }

    /// OpenAI defaults: temperature 1, top_p 1.
    pub fn gpt(name: &str, endpoint_url: &str) -> Self {
        Self::new(name, endpoint_url, "OPENAI_API_KEY")
    }

    /// Gemini defaults: temperature 0.9, top_p 1.0.
    pub fn gemini(name: &str, endpoint_url: &str) -> Self {
        Self {
            temperature: 0.9,
            ..Self::new(name, endpoint_url, "GEMINI_API_KEY")
        }
    }

    /// Llama-2 chat setting: temperature 0.7, top_p 0.9.
    pub fn llama2(name: &str, endpoint_url: &str) -> Self {
        Self {
            temperature: 0.7,
            top_p: 0.9,
            ..Self::new(name, endpoint_url, "HF_API_KEY")
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::InvalidSpec(format!("model `{}`: {msg}", self.name)));
        if self.name.trim().is_empty() {
            return bad("empty name".into());
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be >= 0", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} must be in (0, 1]", self.top_p));
        }
        if self.requests_per_minute == 0 {
            return bad("requests_per_minute must be positive".into());
        }
        Ok(())
    }
}
