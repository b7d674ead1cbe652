//! Chat-completions harness: prompt regimes, a retrying rate-limited client,
//! the experiment grid runner with resumable JSONL logging, the temperature
//! sweep, the misinformation probe, and a scripted mock server.

pub mod client;
pub mod misinfo;
pub mod mock;
pub mod model;
pub mod prompt;
pub mod ratelimit;
pub mod runner;
pub mod sweep;

use thiserror::Error;

pub use client::{ChatClient, Completion, RequestFailure, RetryPolicy};
pub use model::ModelSpec;
pub use prompt::{build_prompt, ChatMessage, PromptBundle, PromptError, Role};
pub use ratelimit::RateLimiter;
pub use runner::{run_experiment, CellKey, CellSummary, PlannedRequest, RunConfig, RunSummary};
pub use sweep::{temperature_sweep, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("environment variable `{env}` for model `{model}` is not set")]
    AuthMissing { model: String, env: String },
    #[error("invalid configuration: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Registry(#[from] repheur_core::survey::RegistryError),
    #[error("reading response log: {0}")]
    Ingest(#[from] repheur_core::survey::IngestError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log writer: {0}")]
    Writer(String),
}
