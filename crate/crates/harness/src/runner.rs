use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use futures::stream::{self, StreamExt};
use repheur_core::survey::{
    ingest_response_log, write_response_log, Group, GroupPair, Registry, Regime, ResponseRecord,
    Source, TopicSpec,
};
use repheur_core::{parse_scale, ParseMode};
use serde::Serialize;
use serde_json::json;
use tokio::io::AsyncWriteExt;
use tokio::sync::mpsc;

use crate::client::{ChatClient, RetryPolicy};
use crate::model::ModelSpec;
use crate::prompt::{build_prompt, ChatMessage, PromptBundle};
use crate::ratelimit::RateLimiter;
use crate::HarnessError;

/// Everything `run_experiment` needs. All fields are read-only during a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub models: Vec<ModelSpec>,
    pub topics: Vec<TopicSpec>,
    pub groups: GroupPair,
    /// Which of the two groups to query.
    pub group_ids: Vec<Group>,
    pub regimes: Vec<Regime>,
    pub repetitions: u32,
    pub log_path: PathBuf,
    pub parallelism: usize,
    pub dry_run: bool,
    pub force: bool,
    pub parse_mode: ParseMode,
    /// Cells parsing below this fraction are reported incomplete.
    pub min_parse_rate: f64,
    pub retry: RetryPolicy,
    /// Rate-limit window; `requests_per_minute` permits per window.
    pub rate_window: Duration,
}

impl RunConfig {
    pub fn new(models: Vec<ModelSpec>, topics: Vec<TopicSpec>, log_path: impl Into<PathBuf>) -> Self {
        Self {
            models,
            topics,
            groups: GroupPair::default(),
            group_ids: Group::BOTH.to_vec(),
            regimes: vec![Regime::Baseline],
            repetitions: 20,
            log_path: log_path.into(),
            parallelism: 4,
            dry_run: false,
            force: false,
            parse_mode: ParseMode::Lenient,
            min_parse_rate: 0.5,
            retry: RetryPolicy::default(),
            rate_window: Duration::from_secs(60),
        }
    }
}

/// Identifies one grid cell. Temperature is kept as its display string so
/// that cells are orderable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CellKey {
    pub model: String,
    pub topic_id: String,
    pub group: Group,
    pub regime: Regime,
    pub temperature: String,
}

impl CellKey {
    fn of_record(r: &ResponseRecord) -> Option<Self> {
        let model = r.model_name.clone()?;
        let temperature = r.request_params.get("temperature")?.as_f64()?;
        Some(Self {
            model,
            topic_id: r.topic_id.clone(),
            group: r.group,
            regime: r.regime,
            temperature: temperature.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CellSummary {
    pub requested: u32,
    pub succeeded: u32,
    pub failed: u32,
    /// Parsed records already in the log before this run.
    pub existing_parsed: u32,
    pub skipped: bool,
    /// Records and parsed records in the log after this run.
    pub records: u32,
    pub parsed: u32,
    pub parse_rate: Option<f64>,
    pub complete: bool,
    pub last_error: Option<String>,
}

/// One request that would be sent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedRequest {
    pub cell: CellKey,
    pub run_index: u32,
    pub messages: Vec<ChatMessage>,
    pub two_turn: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub cells: BTreeMap<CellKey, CellSummary>,
    pub records_written: usize,
    pub requests_failed: usize,
    pub attempts_total: u64,
    pub retry_total: u64,
    pub planned: Vec<PlannedRequest>,
}

impl RunSummary {
    pub fn incomplete_cells(&self) -> impl Iterator<Item = (&CellKey, &CellSummary)> {
        self.cells.iter().filter(|(_, c)| !c.complete)
    }
}

struct Job {
    model: usize,
    topic: usize,
    cell: CellKey,
    run_index: u32,
    bundle: PromptBundle,
}

struct Outcome {
    cell: CellKey,
    attempts: u32,
    result: Result<ResponseRecord, String>,
}

#[derive(Default)]
struct Existing {
    records: u32,
    parsed: u32,
    next_run: u32,
}

fn scan_log(cfg: &RunConfig, registry: &Registry) -> Result<BTreeMap<CellKey, Existing>, HarnessError> {
    let mut out: BTreeMap<CellKey, Existing> = BTreeMap::new();
    if !cfg.log_path.exists() {
        return Ok(out);
    }
    let file = BufReader::new(File::open(&cfg.log_path)?);
    let log = ingest_response_log(file, registry, cfg.parse_mode)?;
    for r in log.records.iter().filter(|r| r.source == Source::Model) {
        let Some(key) = CellKey::of_record(r) else { continue };
        let e = out.entry(key).or_default();
        e.records += 1;
        e.parsed += u32::from(r.scale_value.is_some());
        e.next_run = e.next_run.max(r.run_index + 1);
    }
    Ok(out)
}

fn validate(cfg: &RunConfig) -> Result<(), HarnessError> {
    if cfg.repetitions == 0 {
        return Err(HarnessError::InvalidSpec("repetitions must be positive".into()));
    }
    if cfg.parallelism == 0 {
        return Err(HarnessError::InvalidSpec("parallelism must be positive".into()));
    }
    cfg.models.iter().try_for_each(ModelSpec::validate)
}

async fn execute(client: &ChatClient, topic: &TopicSpec, job: Job, mode: ParseMode) -> Outcome {
    let spec = client.spec();
    let first = client.complete(&job.bundle.messages_turn1).await;
    let mut attempts = first.as_ref().map_or_else(|e| e.attempts, |c| c.attempts);
    let mut params = json!({"temperature": spec.temperature, "top_p": spec.top_p});
    let text = match first {
        Err(e) => Err(e.message),
        Ok(c) if !job.bundle.needs_second_turn => Ok(c.content),
        Ok(c) => {
            let msgs = job.bundle.second_turn_messages(&c.content).expect("two-turn bundle");
            params["turn1_response"] = json!(c.content);
            let second = client.complete(&msgs).await;
            attempts += second.as_ref().map_or_else(|e| e.attempts, |c| c.attempts);
            second.map(|c| c.content).map_err(|e| format!("second turn: {}", e.message))
        }
    };
    let result = text.map(|raw_text| ResponseRecord {
        topic_id: topic.topic_id.clone(),
        group: job.cell.group,
        source: Source::Model,
        model_name: Some(spec.name.clone()),
        regime: job.cell.regime,
        run_index: job.run_index,
        scale_value: parse_scale(&raw_text, &topic.scale, mode),
        raw_text,
        timestamp: Utc::now(),
        request_params: params,
    });
    Outcome {
        cell: job.cell,
        attempts,
        result,
    }
}

async fn log_writer(path: PathBuf, mut rx: mpsc::Receiver<ResponseRecord>) -> std::io::Result<usize> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        tokio::fs::create_dir_all(dir).await?;
    }
    let mut file = tokio::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .await?;
    let mut written = 0;
    while let Some(rec) = rx.recv().await {
        let mut line = Vec::new();
        write_response_log(&mut line, std::slice::from_ref(&rec))?;
        file.write_all(&line).await?;
        written += 1;
    }
    file.flush().await?;
    Ok(written)
}

/// Runs the (model × topic × group × regime) grid with `repetitions`
/// requests per cell, appending every successful exchange to the log.
///
/// Cells already holding enough parsed records are skipped unless `force`;
/// partially filled cells only run their missing repetitions. Failed
/// requests write nothing and leave the cell incomplete.
pub async fn run_experiment(cfg: &RunConfig) -> Result<RunSummary, HarnessError> {
    validate(cfg)?;
    let registry = Registry::from_topics(cfg.topics.clone())?;
    let existing = scan_log(cfg, &registry)?;

    let mut summary = RunSummary::default();
    let mut jobs = Vec::new();
    for (mi, model) in cfg.models.iter().enumerate() {
        for (ti, topic) in cfg.topics.iter().enumerate() {
            for &group in &cfg.group_ids {
                let label = cfg.groups.label(group);
                for &regime in &cfg.regimes {
                    let bundle = build_prompt(topic, &label, regime)?;
                    let cell = CellKey {
                        model: model.name.clone(),
                        topic_id: topic.topic_id.clone(),
                        group,
                        regime,
                        temperature: model.temperature.to_string(),
                    };
                    let prior = existing.get(&cell);
                    let have = prior.map_or(0, |e| e.parsed);
                    let start = prior.map_or(0, |e| e.next_run);
                    let todo = if cfg.force {
                        cfg.repetitions
                    } else {
                        cfg.repetitions.saturating_sub(have)
                    };
                    summary.cells.insert(
                        cell.clone(),
                        CellSummary {
                            requested: todo,
                            existing_parsed: have,
                            skipped: todo == 0,
                            ..Default::default()
                        },
                    );
                    for k in 0..todo {
                        summary.planned.push(PlannedRequest {
                            cell: cell.clone(),
                            run_index: start + k,
                            messages: bundle.messages_turn1.clone(),
                            two_turn: bundle.needs_second_turn,
                        });
                        jobs.push(Job {
                            model: mi,
                            topic: ti,
                            cell: cell.clone(),
                            run_index: start + k,
                            bundle: bundle.clone(),
                        });
                    }
                }
            }
        }
    }

    if cfg.dry_run {
        return Ok(summary);
    }

    let mut clients = Vec::with_capacity(cfg.models.len());
    for m in &cfg.models {
        let key = std::env::var(&m.api_key_env).map_err(|_| HarnessError::AuthMissing {
            model: m.name.clone(),
            env: m.api_key_env.clone(),
        })?;
        let limiter = Arc::new(RateLimiter::new(m.requests_per_minute, cfg.rate_window));
        clients.push(ChatClient::new(m.clone(), Some(key), limiter, cfg.retry));
    }

    let (tx, rx) = mpsc::channel(256);
    let writer = tokio::spawn(log_writer(cfg.log_path.clone(), rx));
    let mut outcomes = stream::iter(jobs)
        .map(|job| execute(&clients[job.model], &cfg.topics[job.topic], job, cfg.parse_mode))
        .buffer_unordered(cfg.parallelism);

    let mut send_failed = false;
    while let Some(o) = outcomes.next().await {
        summary.attempts_total += u64::from(o.attempts);
        summary.retry_total += u64::from(o.attempts.saturating_sub(1));
        let cell = summary.cells.get_mut(&o.cell).expect("planned cell");
        match o.result {
            Ok(rec) => {
                cell.succeeded += 1;
                if tx.send(rec).await.is_err() {
                    send_failed = true;
                    break;
                }
            }
            Err(msg) => {
                cell.failed += 1;
                summary.requests_failed += 1;
                log::warn!("{} / {} / {}: {msg}", o.cell.model, o.cell.topic_id, o.cell.group);
                cell.last_error = Some(msg);
            }
        }
    }
    drop(outcomes);
    drop(tx);
    let written = writer
        .await
        .map_err(|e| HarnessError::Writer(e.to_string()))??;
    if send_failed {
        return Err(HarnessError::Writer("log writer stopped early".into()));
    }
    summary.records_written = written;

    let after = scan_log(cfg, &registry)?;
    for (key, cell) in summary.cells.iter_mut() {
        let e = after.get(key);
        cell.records = e.map_or(0, |e| e.records);
        cell.parsed = e.map_or(0, |e| e.parsed);
        cell.parse_rate = (cell.records > 0).then(|| f64::from(cell.parsed) / f64::from(cell.records));
        cell.complete = cell.failed == 0
            && cell.parse_rate.is_some_and(|r| r >= cfg.min_parse_rate)
            && (cell.skipped || cell.succeeded == cell.requested);
    }
    Ok(summary)
}
