//! `repheur` command line: ingest, run, sweep, misinfo, report, validate.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use repheur_core::misinfo::{load_statements_csv, write_metrics_csv, FpNorm, Variant};
use repheur_core::survey::{Group, Regime, Reject, TopicSpec};
use repheur_harness::misinfo::{metrics_rows, run_misinfo, MisinfoRunConfig};
use repheur_harness::sweep::{write_sweep_csv, DEFAULT_SWEEP_REPETITIONS};
use repheur_harness::{run_experiment, temperature_sweep, ModelSpec, RunConfig, RunSummary};
use repheur_report::data::FileRejects;
use repheur_report::{
    compute_report, emit_plot_data, emit_tables, load_study, validate_fixtures, ReportError, StudyConfig,
};

pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "repheur", version, about = "Representativeness-heuristic studies of model predictions")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate and tally the inputs named by a study config.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the rejects report (default: next to the config).
        #[arg(long)]
        rejects: Option<PathBuf>,
    },
    /// Query models over the topic x group x regime grid.
    Run(RunArgs),
    /// Baseline grid of one model at several temperatures.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 1.5, 2.0])]
        temperatures: Vec<f64>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Binary misinformation detection over a statement set.
    Misinfo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        statements: PathBuf,
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        #[arg(long, value_enum, default_value_t = FpNormArg::Answered)]
        fp_norm: FpNormArg,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dry_run: bool,
    },
    /// Compute metrics and write tables and plot data.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reproduce the published fixture numbers and print PASS/FAIL per check.
    Validate {
        /// Print every check, not only failures and totals.
        #[arg(long)]
        all: bool,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Model names from the config (all when omitted).
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    /// Topic ids (the config's selection when omitted).
    #[arg(long, value_delimiter = ',')]
    topics: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    regimes: Vec<Regime>,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    #[arg(long)]
    dry_run: bool,
    #[arg(long)]
    force: bool,
    /// Response log to append to (default: the config's first log path).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FpNormArg {
    Answered,
    AnsweredNegatives,
}

impl From<FpNormArg> for FpNorm {
    fn from(a: FpNormArg) -> Self {
        match a {
            FpNormArg::Answered => FpNorm::Answered,
            FpNormArg::AnsweredNegatives => FpNorm::AnsweredNegatives,
        }
    }
}

/// Marks an error as caused by the invocation rather than the data.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> i32 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>() || matches!(e.downcast_ref::<ReportError>(), Some(ReportError::Config(_)))
    });
    if usage {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

/// Parses `argv` (program name first), runs the command, and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let mut out = std::io::stdout().lock();
    match dispatch(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Ingest { config, rejects } => ingest(&config, rejects, out),
        Command::Run(args) => runtime()?.block_on(run(&args, out)),
        Command::Sweep {
            run,
            temperatures,
            out: dest,
        } => runtime()?.block_on(sweep(&run, &temperatures, dest.as_deref(), out)),
        Command::Misinfo {
            config,
            statements,
            models,
            variants,
            fp_norm,
            parallelism,
            log,
            out: dest,
            dry_run,
        } => {
            let cfg = StudyConfig::load(&config)?;
            let mut mc = MisinfoRunConfig::new(select_models(&cfg, &models)?);
            if !variants.is_empty() {
                mc.variants = variants;
            }
            mc.parallelism = parallelism;
            mc.log_path = log;
            mc.dry_run = dry_run;
            runtime()?.block_on(misinfo(&mc, &statements, fp_norm.into(), dest.as_deref(), out))
        }
        Command::Report { config, out: dir } => report(&config, &dir, out),
        Command::Validate { all } => validate(all, out),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

fn write_rejects(path: &Path, rejects: &[FileRejects]) -> Result<()> {
    let text = serde_json::to_string_pretty(rejects)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn ingest(config: &Path, rejects_path: Option<PathBuf>, out: &mut dyn Write) -> Result<i32> {
    let cfg = StudyConfig::load(config)?;
    let data = load_study(&cfg)?;
    writeln!(out, "topics: {}", data.registry.len())?;
    writeln!(
        out,
        "empirical: {} rows, {} tallied, {} dropped",
        data.empirical.rows,
        data.empirical.tallied(),
        data.empirical.dropped
    )?;
    for ((topic, group), c) in &data.empirical.counts {
        writeln!(out, "  {topic} {group}: {} responses", c.total())?;
    }
    let refusals = data.records.iter().filter(|r| r.scale_value.is_none()).count();
    writeln!(out, "log records: {} ({} refusals)", data.records.len(), refusals)?;
    for pm in &data.predicted_means {
        writeln!(out, "predicted means {} {}: {} rows", pm.predictor, pm.regime, pm.table.rows.len())?;
    }
    let n = data.reject_count();
    if n == 0 {
        writeln!(out, "rejects: 0")?;
        return Ok(0);
    }
    let path = rejects_path.unwrap_or_else(|| config.with_file_name("rejects.json"));
    write_rejects(&path, &data.rejects)?;
    writeln!(out, "rejects: {n} (see {})", path.display())?;
    Ok(EXIT_DATA)
}

fn select_models(cfg: &StudyConfig, names: &[String]) -> Result<Vec<ModelSpec>> {
    if cfg.models.is_empty() {
        return Err(usage("the config defines no [[models]]"));
    }
    if names.is_empty() {
        return Ok(cfg.models.clone());
    }
    names
        .iter()
        .map(|n| {
            cfg.models
                .iter()
                .find(|m| &m.name == n)
                .cloned()
                .ok_or_else(|| usage(format!("model `{n}` is not in the config")))
        })
        .collect()
}

fn run_config(args: &RunArgs) -> Result<(RunConfig, StudyConfig)> {
    let cfg = StudyConfig::load(&args.config)?;
    let registry = cfg.registry()?;
    let topics: Vec<TopicSpec> = if args.topics.is_empty() {
        registry.topics().to_vec()
    } else {
        args.topics
            .iter()
            .map(|id| {
                registry
                    .get(id)
                    .cloned()
                    .ok_or_else(|| usage(format!("topic `{id}` is not selected by the config")))
            })
            .collect::<Result<_>>()?
    };
    let log = match (&args.log, cfg.log_paths.first()) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p.clone(),
        (None, None) => return Err(usage("no --log given and the config has no log_paths")),
    };
    let mut rc = RunConfig::new(select_models(&cfg, &args.models)?, topics, log);
    rc.groups = cfg.groups.clone();
    rc.regimes = if args.regimes.is_empty() {
        cfg.regimes.clone()
    } else {
        args.regimes.clone()
    };
    if let Some(r) = args.reps {
        rc.repetitions = r;
    }
    rc.parallelism = args.parallelism;
    rc.dry_run = args.dry_run;
    rc.force = args.force;
    rc.parse_mode = cfg.parse_mode;
    rc.min_parse_rate = cfg.min_parse_rate;
    Ok((rc, cfg))
}

fn print_plan(summary: &RunSummary, out: &mut dyn Write) -> Result<()> {
    for p in &summary.planned {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\tt={}\trun={}\t{}",
            p.cell.model,
            p.cell.topic_id,
            p.cell.group,
            p.cell.regime,
            p.cell.temperature,
            p.run_index,
            if p.two_turn { "two-turn" } else { "single-turn" }
        )?;
    }
    writeln!(out, "planned requests: {}", summary.planned.len())?;
    Ok(())
}

fn print_summary(summary: &RunSummary, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "records written: {}, failed requests: {}, attempts: {}, retries: {}",
        summary.records_written, summary.requests_failed, summary.attempts_total, summary.retry_total
    )?;
    for (k, c) in &summary.cells {
        let rate = c.parse_rate.map_or("NA".to_string(), |r| format!("{r:.2}"));
        writeln!(
            out,
            "{} {} {} {} t={}: {} records, {} parsed, parse rate {rate}{}{}",
            k.model,
            k.topic_id,
            k.group,
            k.regime,
            k.temperature,
            c.records,
            c.parsed,
            if c.skipped { ", skipped" } else { "" },
            if c.complete { "" } else { ", INCOMPLETE" }
        )?;
    }
    Ok(())
}

async fn run(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let (rc, _) = run_config(args)?;
    let summary = run_experiment(&rc).await?;
    if rc.dry_run {
        print_plan(&summary, out)?;
        return Ok(0);
    }
    print_summary(&summary, out)?;
    Ok(if summary.incomplete_cells().next().is_some() {
        EXIT_DATA
    } else {
        0
    })
}

/// Empirical (target, reference) means per topic, from whatever the
/// config provides.
fn empirical_means(cfg: &StudyConfig) -> Result<BTreeMap<String, (f64, f64)>> {
    let data = load_study(cfg)?;
    let mut out = BTreeMap::new();
    for t in data.registry.topics() {
        let mean = |g| {
            data.empirical
                .get(&t.topic_id, g)
                .and_then(|c| c.to_distribution().ok())
                .map(|d| d.mean())
                .or_else(|| data.empirical_means.get(&t.topic_id, g).map(|r| r.mean))
        };
        if let (Some(a), Some(b)) = (mean(Group::Target), mean(Group::Reference)) {
            out.insert(t.topic_id.clone(), (a, b));
        }
    }
    Ok(out)
}

async fn sweep(args: &RunArgs, temps: &[f64], dest: Option<&Path>, out: &mut dyn Write) -> Result<i32> {
    let (mut rc, cfg) = run_config(args)?;
    if rc.models.len() != 1 {
        return Err(usage("a sweep takes exactly one model; pass --models NAME"));
    }
    if args.reps.is_none() {
        rc.repetitions = DEFAULT_SWEEP_REPETITIONS;
    }
    let emp = empirical_means(&cfg)?;
    let (rows, summaries) = temperature_sweep(&rc, temps, (!emp.is_empty()).then_some(&emp)).await?;
    if rc.dry_run {
        for s in &summaries {
            print_plan(s, out)?;
        }
        return Ok(0);
    }
    match dest {
        Some(p) => {
            write_sweep_csv(File::create(p).with_context(|| format!("creating {}", p.display()))?, &rows)?;
            writeln!(out, "wrote {}", p.display())?;
        }
        None => write_sweep_csv(&mut *out, &rows)?,
    }
    Ok(0)
}

async fn misinfo(
    mc: &MisinfoRunConfig,
    statements: &Path,
    fp: FpNorm,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32> {
    let file = File::open(statements).with_context(|| format!("opening {}", statements.display()))?;
    let set = load_statements_csv(file)?;
    for Reject { line, reason } in &set.rejects {
        log::warn!("{}:{line}: {reason}", statements.display());
    }
    if set.statements.is_empty() {
        bail!("{}: no usable statements", statements.display());
    }
    let outcomes = run_misinfo(mc, &set.statements).await?;
    if mc.dry_run {
        for o in &outcomes {
            writeln!(out, "{} {}: {} prompts, {} skipped", o.model, o.variant, o.predictions.len(), o.skipped)?;
        }
        return Ok(0);
    }
    let rows = metrics_rows(&outcomes, fp);
    match dest {
        Some(p) => {
            write_metrics_csv(File::create(p).with_context(|| format!("creating {}", p.display()))?, &rows)?;
            writeln!(out, "wrote {}", p.display())?;
        }
        None => write_metrics_csv(&mut *out, &rows)?,
    }
    Ok(0)
}

fn report(config: &Path, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let cfg = StudyConfig::load(config)?;
    let data = load_study(&cfg)?;
    let report = compute_report(&cfg, &data);
    if report.is_empty() {
        log::warn!("no cells could be computed; tables will hold headers only");
    }
    let mut written = emit_tables(&report, dir)?;
    written.extend(emit_plot_data(&report, dir)?);
    let full = dir.join("report.json");
    std::fs::write(&full, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("writing {}", full.display()))?;
    written.push(full);
    if data.reject_count() > 0 {
        let p = dir.join("rejects.json");
        write_rejects(&p, &data.rejects)?;
        log::warn!("{} input lines rejected (see {})", data.reject_count(), p.display());
        written.push(p);
    }
    for w in &written {
        writeln!(out, "wrote {}", w.display())?;
    }
    let incomplete = report.cells.iter().filter(|c| !c.complete).count();
    writeln!(
        out,
        "{} cells, {} units, {} incomplete, {} rejected lines",
        report.cells.len(),
        report.units.len(),
        incomplete,
        report.rejected_lines
    )?;
    Ok(0)
}

fn validate(all: bool, out: &mut dyn Write) -> Result<i32> {
    let v = validate_fixtures();
    let mut groups: Vec<&str> = Vec::new();
    for c in &v.checks {
        if !groups.contains(&c.group) {
            groups.push(c.group);
        }
        if all || !c.pass {
            writeln!(out, "{}", c.line())?;
        }
    }
    for g in groups {
        let (pass, total) = v.group(g).fold((0, 0), |(p, t), c| (p + c.pass as usize, t + 1));
        writeln!(out, "{} {g}: {pass}/{total}", if pass == total { "PASS" } else { "FAIL" })?;
    }
    Ok(if v.passed() { 0 } else { EXIT_DATA })
}
