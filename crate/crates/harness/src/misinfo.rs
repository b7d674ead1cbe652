use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use repheur_core::misinfo::{
    build_misinfo_prompt, parse_binary, score_misinfo, FpNorm, MetricsRow, Slice,
    StatementRecord, Variant,
};
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;

use crate::client::{ChatClient, RetryPolicy};
use crate::model::ModelSpec;
use crate::prompt::ChatMessage;
use crate::ratelimit::RateLimiter;
use crate::HarnessError;

#[derive(Debug, Clone)]
pub struct MisinfoRunConfig {
    pub models: Vec<ModelSpec>,
    pub variants: Vec<Variant>,
    pub parallelism: usize,
    pub retry: RetryPolicy,
    pub rate_window: Duration,
    /// Optional JSONL log of every exchange.
    pub log_path: Option<PathBuf>,
    pub dry_run: bool,
}

impl MisinfoRunConfig {
    pub fn new(models: Vec<ModelSpec>) -> Self {
        Self {
            models,
            variants: Variant::ALL.to_vec(),
            parallelism: 4,
            retry: RetryPolicy::default(),
            rate_window: Duration::from_secs(60),
            log_path: None,
            dry_run: false,
        }
    }
}

/// Predictions of one model under one variant, in statement order.
#[derive(Debug, Clone, PartialEq)]
pub struct MisinfoOutcome {
    pub model: String,
    pub variant: Variant,
    pub predictions: Vec<(StatementRecord, Option<bool>)>,
    /// Requests that failed outright; scored as unanswered.
    pub failed: usize,
    /// Statements the variant could not be built for; left out of scoring.
    pub skipped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MisinfoLogEntry {
    pub model: String,
    pub variant: Variant,
    pub index: usize,
    pub raw_text: Option<String>,
    pub prediction: Option<bool>,
    pub error: Option<String>,
    pub timestamp: DateTime<Utc>,
}

/// Queries every (model, variant, statement) and collects binary answers.
/// Variants needing a speaker skip speakerless statements.
pub async fn run_misinfo(
    cfg: &MisinfoRunConfig,
    statements: &[StatementRecord],
) -> Result<Vec<MisinfoOutcome>, HarnessError> {
    cfg.models.iter().try_for_each(ModelSpec::validate)?;
    let mut clients = Vec::new();
    for m in &cfg.models {
        let key = if cfg.dry_run {
            None
        } else {
            Some(std::env::var(&m.api_key_env).map_err(|_| HarnessError::AuthMissing {
                model: m.name.clone(),
                env: m.api_key_env.clone(),
            })?)
        };
        let limiter = Arc::new(RateLimiter::new(m.requests_per_minute, cfg.rate_window));
        clients.push(ChatClient::new(m.clone(), key, limiter, cfg.retry));
    }

    let mut log_file = match &cfg.log_path {
        Some(p) if !cfg.dry_run => Some(
            tokio::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .await?,
        ),
        _ => None,
    };

    let mut outcomes = Vec::new();
    for client in &clients {
        for &variant in &cfg.variants {
            let mut prompts = Vec::new();
            let mut skipped = 0;
            for (i, s) in statements.iter().enumerate() {
                match build_misinfo_prompt(s, variant) {
                    Ok(p) => prompts.push((i, p)),
                    Err(_) => skipped += 1,
                }
            }
            let mut outcome = MisinfoOutcome {
                model: client.spec().name.clone(),
                variant,
                predictions: Vec::with_capacity(prompts.len()),
                failed: 0,
                skipped,
            };
            if cfg.dry_run {
                outcome.predictions = prompts
                    .iter()
                    .map(|(i, _)| (statements[*i].clone(), None))
                    .collect();
                outcomes.push(outcome);
                continue;
            }
            let mut answers: Vec<(usize, Result<String, String>)> = stream::iter(prompts)
                .map(|(i, prompt)| async move {
                    let res = client.complete(&[ChatMessage::user(prompt)]).await;
                    (i, res.map(|c| c.content).map_err(|e| e.to_string()))
                })
                .buffer_unordered(cfg.parallelism.max(1))
                .collect()
                .await;
            answers.sort_by_key(|(i, _)| *i);
            for (i, res) in answers {
                let prediction = res.as_ref().ok().and_then(|t| parse_binary(t));
                if res.is_err() {
                    outcome.failed += 1;
                }
                if let Some(f) = log_file.as_mut() {
                    let entry = MisinfoLogEntry {
                        model: outcome.model.clone(),
                        variant,
                        index: i,
                        raw_text: res.as_ref().ok().cloned(),
                        prediction,
                        error: res.err(),
                        timestamp: Utc::now(),
                    };
                    let mut line = serde_json::to_vec(&entry).expect("log entry serializes");
                    line.push(b'\n');
                    f.write_all(&line).await?;
                }
                outcome.predictions.push((statements[i].clone(), prediction));
            }
            outcomes.push(outcome);
        }
    }
    if let Some(f) = log_file.as_mut() {
        f.flush().await?;
    }
    Ok(outcomes)
}

/// Scores every outcome over the overall, Democrat and Republican slices.
pub fn metrics_rows(outcomes: &[MisinfoOutcome], fp_norm: FpNorm) -> Vec<MetricsRow> {
    outcomes
        .iter()
        .flat_map(|o| {
            Slice::ALL.into_iter().map(move |slice| MetricsRow {
                model: o.model.clone(),
                variant: o.variant,
                slice,
                metrics: score_misinfo(&o.predictions, slice, fp_norm),
            })
        })
        .collect()
}
