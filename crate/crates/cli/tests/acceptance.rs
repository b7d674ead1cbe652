//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always printed; exits nonzero when any
//! criterion fails.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufReader;
use std::time::Duration;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use repheur_core::misinfo::{score_misinfo, FpNorm, Party, Slice, StatementRecord};
use repheur_core::survey::{
    ingest_response_log, write_response_log, Group, Regime, Registry, TopicSpec,
};
use repheur_core::{
    epsilon_reference, epsilon_target, gamma_kernel_of_truth, representativeness, AttributeScale,
    ConditionalDistribution, MeanPair, ParseMode, ResponseCounts,
};
use repheur_harness::mock::{MockReply, MockServer};
use repheur_harness::{run_experiment, temperature_sweep, ModelSpec, RetryPolicy, RunConfig};
use repheur_report::validate::{fixtures, gamma_checks, kappa_check};
use repheur_report::{compute_report, emit_plot_data, load_study, StudyConfig};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome {
            pass,
            summary: summary.into(),
            details: Vec::new(),
        }
    }
}

// ---- 1: γ from published means ------------------------------------------

fn gamma_reproduction() -> Outcome {
    let checks = gamma_checks();
    let per_topic: Vec<_> = checks.iter().filter(|c| c.group == "gamma_per_topic").collect();
    let anchors: Vec<_> = checks.iter().filter(|c| c.group == "gamma_anchor").collect();
    let ok = per_topic.iter().filter(|c| c.pass).count();
    let anchors_ok = anchors.iter().all(|c| c.pass);
    let mut out = Outcome::new(
        ok == per_topic.len() && anchors_ok && anchors.len() == 2,
        format!(
            "gamma fixture reproduction: {ok}/{} per-topic cells within 0.02; anchors {}",
            per_topic.len(),
            if anchors_ok { "pass" } else { "fail" }
        ),
    );
    out.details = checks.iter().filter(|c| !c.pass || c.group == "gamma_anchor").map(|c| c.line()).collect();
    out
}

// ---- 2: κ anchor -----------------------------------------------------------

fn kappa_reproduction() -> Outcome {
    let c = kappa_check();
    Outcome::new(c.pass, format!("kappa fixture reproduction: {}", c.line()))
}

// ---- 3: estimator round trips --------------------------------------------

fn round_trips() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let gamma = runner.run(
        &(1.0f64..7.0, 1.0f64..7.0, -5.0f64..5.0).prop_filter("separated means", |(a, b, _)| (a - b).abs() > 0.05),
        |(et, er, g0)| {
            let pred_t = (1.0 + g0) * et - g0 * er;
            let m = MeanPair::empirical(et, er).with_predicted(Some(pred_t), Some(er));
            let g = gamma_kernel_of_truth(&m, 1e-6).unwrap();
            prop_assert!((g - g0).abs() <= 1e-12, "gamma {g} vs {g0}");
            Ok(())
        },
    );
    let eps = runner.run(
        &(1.0f64..7.0, 1.0f64..7.0, 1.01f64..20.0, -5.0f64..5.0, -5.0f64..5.0),
        |(et, er, p, e_t, e_r)| {
            let m = MeanPair::empirical(et, er)
                .with_predicted(Some(et + e_t * (p - 1.0)), Some(er - e_r * (p - 1.0)));
            let a = epsilon_target(&m, p, 1e-6).unwrap();
            let b = epsilon_reference(&m, p, 1e-6).unwrap();
            prop_assert!((a - e_t).abs() <= 1e-12, "eps+ {a} vs {e_t}");
            prop_assert!((b - e_r).abs() <= 1e-12, "eps- {b} vs {e_r}");
            Ok(())
        },
    );
    let mut out = Outcome::new(
        gamma.is_ok() && eps.is_ok(),
        "estimator round trips: 1000 gamma tuples and 1000 epsilon tuples",
    );
    out.details.extend(gamma.err().map(|e| format!("gamma: {e}")));
    out.details.extend(eps.err().map(|e| format!("epsilon: {e}")));
    out
}

// ---- 4: distribution core, exhaustive on a grid --------------------------

/// Every count vector of `n` entries summing to 4 (probability step 0.25).
fn grid(n: usize) -> Vec<Vec<u64>> {
    fn rec(n: usize, left: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(n, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, 4, &mut Vec::new(), &mut out);
    out
}

/// Highest index among the maxima, compared exactly as fractions.
fn oracle_argmax(num: &[u64], den: &[u64]) -> usize {
    let mut best = 0;
    for a in 1..num.len() {
        // num[a]/den[a] >= num[best]/den[best]
        if num[a] * den[best] >= num[best] * den[a] {
            best = a;
        }
    }
    best + 1
}

fn distribution_core() -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for n in 2..=5 {
        let scale = AttributeScale::new(n).unwrap();
        let dists = grid(n);
        for c in &dists {
            let counts = ResponseCounts::from_counts(scale.clone(), c.clone()).unwrap();
            let s = counts.smooth_add_one();
            let total: f64 = s.probs().iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                failures.push(format!("smoothing {c:?} sums to {total}"));
            }
            let rv = representativeness(&s, &s).unwrap();
            if rv.ratios().iter().any(|r| (r - 1.0).abs() > 1e-12) || rv.exemplar() != n {
                failures.push(format!("identity ratios {c:?}"));
            }
            let raw = ConditionalDistribution::new(scale.clone(), c.iter().map(|&x| x as f64 / 4.0).collect()).unwrap();
            if raw.mode_attribute() != oracle_argmax(c, &vec![1; n]) {
                failures.push(format!("mode {c:?}"));
            }
            if raw.reversed().reversed() != raw {
                failures.push(format!("distribution reversal {c:?}"));
            }
            for r in &dists {
                let sr = ResponseCounts::from_counts(scale.clone(), r.clone()).unwrap().smooth_add_one();
                let rv = representativeness(&s, &sr).unwrap();
                let plus1 = |v: &[u64]| v.iter().map(|x| x + 1).collect::<Vec<_>>();
                let expected = oracle_argmax(&plus1(c), &plus1(r));
                if rv.exemplar() != expected {
                    failures.push(format!("exemplar {c:?}/{r:?}: {} vs {expected}", rv.exemplar()));
                }
                let mut prev: BTreeSet<usize> = BTreeSet::new();
                for k in 1..=n {
                    let tail = rv.right_tail_attributes(k).unwrap();
                    if !prev.is_subset(&tail) || tail.len() < k || !tail.contains(&rv.exemplar()) {
                        failures.push(format!("tail {c:?}/{r:?} N={k}"));
                    }
                    prev = tail;
                }
                checked += 1;
            }
        }
        for v in 1..=n {
            if scale.reflect(scale.reflect(v).unwrap()).unwrap() != v {
                failures.push(format!("reflect {v} on {n}"));
            }
        }
    }
    let mut out = Outcome::new(
        failures.is_empty(),
        format!("distribution core: {checked} grid pairs over n<=5, {} failures", failures.len()),
    );
    out.details = failures.into_iter().take(10).collect();
    out
}

// ---- 5, 6: harness against the mock server --------------------------------

const KEY_ENV: &str = "REPHEUR_ACCEPTANCE_KEY";

fn topic(id: &str) -> TopicSpec {
    Registry::builtin().get(id).unwrap().clone()
}

fn run_config(server: &MockServer, dir: &tempfile::TempDir, topics: &[&str]) -> RunConfig {
    let mut m = ModelSpec::new("mock-model", server.url(), KEY_ENV);
    m.requests_per_minute = 10_000;
    let mut cfg = RunConfig::new(vec![m], topics.iter().map(|t| topic(t)).collect(), dir.path().join("log.jsonl"));
    cfg.retry = RetryPolicy {
        base: Duration::from_millis(1),
        max: Duration::from_millis(5),
    };
    cfg
}

fn log_round_trip(cfg: &RunConfig) -> Result<usize, String> {
    let reg = Registry::from_topics(cfg.topics.clone()).unwrap();
    let text = std::fs::read_to_string(&cfg.log_path).map_err(|e| e.to_string())?;
    let log = ingest_response_log(text.as_bytes(), &reg, ParseMode::Lenient).map_err(|e| e.to_string())?;
    if !log.rejects.is_empty() {
        return Err(format!("{} rejects", log.rejects.len()));
    }
    for (line, r) in text.lines().zip(&log.records) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let same = v["topic_id"] == r.topic_id.as_str()
            && v["group"] == serde_json::to_value(r.group).unwrap()
            && v["regime"] == r.regime.as_str()
            && v["model_name"] == serde_json::to_value(&r.model_name).unwrap()
            && v["run_index"] == r.run_index
            && v["raw_text"] == r.raw_text.as_str()
            && v["scale_value"] == serde_json::to_value(r.scale_value).unwrap()
            && v["request_params"] == r.request_params;
        if !same {
            return Err(format!("field mismatch on {line}"));
        }
    }
    let mut buf = Vec::new();
    write_response_log(&mut buf, &log.records).unwrap();
    let again = ingest_response_log(buf.as_slice(), &reg, ParseMode::Lenient).unwrap();
    if again.records != log.records {
        return Err("re-serialized log differs".into());
    }
    Ok(log.records.len())
}

async fn harness_contract() -> Outcome {
    std::env::set_var(KEY_ENV, "acceptance-token");
    let mut failures = Vec::new();

    // 20 repetitions x 2 groups
    let server = MockServer::constant("Scale: 6").await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(&server, &dir, &["liberal_conservative"]);
    let s = run_experiment(&cfg).await.unwrap();
    if s.records_written != 40 || server.request_count() != 40 {
        failures.push(format!("grid wrote {} records", s.records_written));
    }
    match log_round_trip(&cfg) {
        Ok(40) => {}
        Ok(n) => failures.push(format!("round trip read {n} records")),
        Err(e) => failures.push(format!("round trip: {e}")),
    }

    // two scripted 429s, max_retries 3
    let server = MockServer::start(vec![MockReply::Status(429), MockReply::Status(429)], |_, _| {
        MockReply::Content("Scale: 4".into())
    })
    .await
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = run_config(&server, &dir, &["liberal_conservative"]);
    cfg.repetitions = 1;
    cfg.group_ids = vec![Group::Target];
    let s = run_experiment(&cfg).await.unwrap();
    if server.request_count() != 3 || s.retry_total != 2 || s.records_written != 1 {
        failures.push(format!("429 script: {} requests, {} retries", server.request_count(), s.retry_total));
    }
    // a permanent 429 stops after max_retries + 1 attempts
    let server = MockServer::start(vec![], |_, _| MockReply::Status(429)).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = run_config(&server, &dir, &["liberal_conservative"]);
    cfg.repetitions = 1;
    cfg.group_ids = vec![Group::Target];
    let s = run_experiment(&cfg).await.unwrap();
    if server.request_count() != 4 || s.requests_failed != 1 {
        failures.push(format!("retry bound: {} attempts", server.request_count()));
    }

    // rate window: 3 per 250 ms
    let server = MockServer::constant("Scale: 4").await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = run_config(&server, &dir, &["liberal_conservative"]);
    let window = Duration::from_millis(250);
    cfg.models[0].requests_per_minute = 3;
    cfg.rate_window = window;
    cfg.repetitions = 4;
    cfg.parallelism = 8;
    run_experiment(&cfg).await.unwrap();
    let mut times: Vec<_> = server.requests().into_iter().map(|r| r.at).collect();
    times.sort();
    // arrival times carry scheduling jitter on top of the permit times
    let horizon = window - Duration::from_millis(50);
    let worst = (0..times.len())
        .map(|i| times[i..].iter().take_while(|u| u.duration_since(times[i]) < horizon).count())
        .max()
        .unwrap_or(0);
    if worst > 3 || times.len() != 8 {
        failures.push(format!("rate window held {worst} requests"));
    }

    // feedback: two turns per repetition
    let server = MockServer::start(vec![], |body, _| {
        let turns = body["messages"].as_array().map_or(0, |m| m.len());
        MockReply::Content(if turns == 1 { "Scale: 7" } else { "Scale: 5" }.into())
    })
    .await
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = run_config(&server, &dir, &["liberal_conservative"]);
    cfg.regimes = vec![Regime::Feedback];
    cfg.repetitions = 3;
    let s = run_experiment(&cfg).await.unwrap();
    let reqs = server.requests();
    let second: Vec<_> = reqs.iter().filter(|r| r.body["messages"].as_array().unwrap().len() == 3).collect();
    let well_formed = second.iter().all(|r| {
        let m = r.body["messages"].as_array().unwrap();
        m[0]["role"] == "user" && m[1]["role"] == "assistant" && m[1]["content"] == "Scale: 7" && m[2]["role"] == "user"
    });
    if s.records_written != 6 || reqs.len() != 12 || second.len() != 6 || !well_formed {
        failures.push(format!("feedback: {} requests, {} second turns", reqs.len(), second.len()));
    }
    if let Err(e) = log_round_trip(&cfg) {
        failures.push(format!("feedback round trip: {e}"));
    }

    let mut out = Outcome::new(
        failures.is_empty(),
        "harness contract: repetition counts, retry bound, rate window, feedback turns, log round trip",
    );
    out.details = failures;
    out
}

async fn cv_checks() -> Outcome {
    std::env::set_var(KEY_ENV, "acceptance-token");
    let constant = MockServer::constant("Scale: 3").await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = run_config(&constant, &dir, &["liberal_conservative", "defense_spending"]);
    cfg.repetitions = 10;
    let (rows, _) = temperature_sweep(&cfg, &[0.0], None).await.unwrap();
    let c0 = rows[0].cv;

    let alternating = MockServer::cycle(&["Scale: 4", "Scale: 6"]).await.unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = run_config(&alternating, &dir, &["liberal_conservative"]);
    cfg.repetitions = 10;
    let (rows, _) = temperature_sweep(&cfg, &[1.0], None).await.unwrap();
    let c1 = rows[0].cv;

    let pass = c0.map(|v| format!("{v:.2}")) == Some("0.00".into()) && c1.is_some_and(|v| (v - 0.2).abs() <= 1e-9);
    Outcome::new(pass, format!("cv checks: constant {c0:?}, alternating 4/6 {c1:?}"))
}

// ---- 7: misinformation scoring -------------------------------------------

fn oracle_metrics(items: &[(bool, Party, Option<bool>)], slice: Slice, norm: FpNorm) -> [Option<f64>; 3] {
    let (mut tp, mut tn, mut fp, mut fneg, mut none) = (0, 0, 0, 0, 0);
    for (label, party, pred) in items {
        let keep = match slice {
            Slice::Overall => true,
            Slice::PartyR => *party == Party::R,
            Slice::PartyD => *party == Party::D,
        };
        if !keep {
            continue;
        }
        match (pred, label) {
            (None, _) => none += 1,
            (Some(true), true) => tp += 1,
            (Some(false), false) => tn += 1,
            (Some(true), false) => fp += 1,
            (Some(false), true) => fneg += 1,
        }
    }
    let answered = tp + tn + fp + fneg;
    let div = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    let fp_den = match norm {
        FpNorm::Answered => answered,
        FpNorm::AnsweredNegatives => fp + tn,
    };
    [div(answered, answered + none), div(tp + tn, answered), div(fp, fp_den)]
}

fn to_records(items: &[(bool, Party, Option<bool>)]) -> Vec<(StatementRecord, Option<bool>)> {
    items
        .iter()
        .enumerate()
        .map(|(i, (label, party, pred))| {
            (
                StatementRecord {
                    statement: format!("s{i}"),
                    label: *label,
                    speaker: None,
                    party: *party,
                },
                *pred,
            )
        })
        .collect()
}

fn misinfo_scoring() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let item = (
        any::<bool>(),
        prop_oneof![Just(Party::R), Just(Party::D)],
        prop_oneof![Just(None), Just(Some(true)), Just(Some(false))],
    );
    let brute = runner.run(&proptest::collection::vec(item, 0..40), |items| {
        let recs = to_records(&items);
        for slice in Slice::ALL {
            for norm in [FpNorm::Answered, FpNorm::AnsweredNegatives] {
                let m = score_misinfo(&recs, slice, norm);
                let got = [m.response_ratio, m.accuracy, m.false_positive_rate];
                prop_assert_eq!(got, oracle_metrics(&items, slice, norm));
            }
        }
        Ok(())
    });
    let hand = [
        (true, Party::R, Some(true)),
        (false, Party::D, Some(false)),
        (true, Party::D, Some(false)),
        (false, Party::R, None),
    ];
    let m = score_misinfo(&to_records(&hand), Slice::Overall, FpNorm::Answered);
    let hand_ok = m.response_ratio == Some(0.75) && m.accuracy == Some(2.0 / 3.0);
    let mut out = Outcome::new(
        brute.is_ok() && hand_ok,
        format!(
            "misinfo scoring: 1000 random sets vs confusion-matrix oracle; hand example RR {:?} accuracy {:?}",
            m.response_ratio, m.accuracy
        ),
    );
    out.details.extend(brute.err().map(|e| e.to_string()));
    out
}

// ---- 8: identity log end to end ------------------------------------------

fn identity_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empirical.csv"), fixtures::SYNTHETIC_EMPIRICAL).unwrap();
    std::fs::write(dir.path().join("identity.jsonl"), fixtures::IDENTITY_LOG).unwrap();
    let cfg_path = dir.path().join("study.toml");
    std::fs::write(
        &cfg_path,
        "schema_version = 1\nempirical_paths = [\"empirical.csv\"]\nlog_paths = [\"identity.jsonl\"]\n",
    )
    .unwrap();
    let cfg = StudyConfig::load(&cfg_path).unwrap();
    let data = load_study(&cfg).unwrap();
    let report = compute_report(&cfg, &data);
    let mut failures = Vec::new();
    let topics: BTreeSet<&str> = report.cells.iter().map(|c| c.topic_id.as_str()).collect();
    let expected: BTreeSet<&str> = data.empirical.topics().collect();
    if topics != expected || topics.is_empty() {
        failures.push(format!("{} of {} topics have cells", topics.len(), expected.len()));
    }
    for c in &report.cells {
        for (what, m) in [("gamma", &c.gamma), ("eps+", &c.epsilon_target), ("eps-", &c.epsilon_reference)] {
            if !m.value().is_some_and(|v| v.abs() <= 1e-9) {
                failures.push(format!("{} {what} = {m:?}", c.topic_id));
            }
        }
    }
    let out_dir = dir.path().join("out");
    emit_plot_data(&report, &out_dir).unwrap();
    let fig: serde_json::Value =
        serde_json::from_reader(BufReader::new(File::open(out_dir.join("mean_difference.json")).unwrap())).unwrap();
    let points = fig["points"].as_array().unwrap();
    let off_line = points
        .iter()
        .filter(|p| (p["x"].as_f64().unwrap() - p["y"].as_f64().unwrap()).abs() > 1e-9)
        .count();
    if off_line > 0 || points.len() != report.cells.len() {
        failures.push(format!("{off_line} of {} plot points off y = x", points.len()));
    }
    let mut out = Outcome::new(
        failures.is_empty(),
        format!(
            "no-deviation end to end: {} topics, {} plot points on y = x",
            topics.len(),
            points.len() - off_line
        ),
    );
    out.details = failures;
    out
}

fn main() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let results = [
        gamma_reproduction(),
        kappa_reproduction(),
        round_trips(),
        distribution_core(),
        rt.block_on(harness_contract()),
        rt.block_on(cv_checks()),
        misinfo_scoring(),
        identity_end_to_end(),
    ];
    for (i, r) in results.iter().enumerate() {
        println!("{} criterion {}: {}", if r.pass { "PASS" } else { "FAIL" }, i + 1, r.summary);
        for d in &r.details {
            println!("    {d}");
        }
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("acceptance: {}/{} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
