use std::path::Path;
use std::process::{Command, Output};

use repheur_harness::mock::MockServer;

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures");

fn repheur(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repheur"))
        .args(args)
        .env("CLI_TEST_KEY", "token")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn copy_fixture(dir: &Path, name: &str) {
    std::fs::copy(Path::new(FIXTURES).join(name), dir.join(name)).unwrap();
}

fn study(dir: &Path, extra: &str) -> String {
    copy_fixture(dir, "synthetic_empirical.csv");
    copy_fixture(dir, "synthetic_identity_log.jsonl");
    let text = format!(
        "schema_version = 1\nempirical_paths = [\"synthetic_empirical.csv\"]\nlog_paths = [\"synthetic_identity_log.jsonl\"]\n{extra}"
    );
    let path = dir.join("study.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn model_block(url: &str) -> String {
    format!(
        "\n[[models]]\nname = \"mock\"\nendpoint_url = \"{url}\"\napi_key_env = \"CLI_TEST_KEY\"\nrequests_per_minute = 10000\n"
    )
}

#[test]
fn report_writes_tables_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "");
    let out = dir.path().join("out");
    let o = repheur(&["report", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["gamma_summary.csv", "kappa_by_regime.txt", "mean_difference.json", "report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let gamma = std::fs::read_to_string(out.join("gamma_summary.csv")).unwrap();
    assert!(gamma.contains("identity,ANES,baseline,0.00,0.00"));
}

#[test]
fn dry_run_lists_requests_without_contacting_anything() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), &model_block("http://127.0.0.1:9/v1/chat/completions"));
    let o = repheur(&[
        "run",
        "--config",
        &cfg,
        "--topics",
        "liberal_conservative",
        "--regimes",
        "feedback",
        "--reps",
        "2",
        "--dry-run",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("planned requests: 4"), "{text}");
    assert_eq!(text.matches("two-turn").count(), 4);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "");
    assert_eq!(repheur(&["run", "--config", &cfg, "--reps", "x"]).status.code(), Some(2));
    assert_eq!(repheur(&["frobnicate"]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "schema_version = 7\n").unwrap();
    assert_eq!(repheur(&["ingest", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(repheur(&["--help"]).status.code(), Some(0));
}

#[test]
fn ingest_reports_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), "");
    assert_eq!(repheur(&["ingest", "--config", &cfg]).status.code(), Some(0));

    let log = dir.path().join("synthetic_identity_log.jsonl");
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str("{\"topic_id\": \"no_such_topic\"}\n");
    std::fs::write(&log, text).unwrap();
    let o = repheur(&["ingest", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("rejects: 1"));
    let rejects: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("rejects.json")).unwrap()).unwrap();
    assert_eq!(rejects[0]["rejects"].as_array().unwrap().len(), 1);
}

#[test]
fn validate_prints_group_lines() {
    let o = repheur(&["validate"]);
    let text = stdout(&o);
    for g in ["gamma_anchor", "kappa", "identity", "identity_plot"] {
        assert!(text.contains(&format!("PASS {g}:")), "{text}");
    }
    assert!(text.contains("gamma_per_topic: 34/49"), "{text}");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_sweep_and_misinfo_against_mock() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let server = rt.block_on(MockServer::constant("Scale: 5")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = study(dir.path(), &model_block(&server.url()));
    let log = dir.path().join("run.jsonl");
    let args = [
        "run",
        "--config",
        &cfg,
        "--topics",
        "liberal_conservative",
        "--regimes",
        "baseline",
        "--reps",
        "3",
        "--log",
        log.to_str().unwrap(),
    ];
    let o = repheur(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("records written: 6"));
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 6);
    // resuming finds every cell complete
    let o = repheur(&args);
    assert!(stdout(&o).contains("records written: 0"));
    assert_eq!(server.request_count(), 6);

    let sweep = dir.path().join("sweep.csv");
    let o = repheur(&[
        "sweep",
        "--config",
        &cfg,
        "--models",
        "mock",
        "--topics",
        "liberal_conservative",
        "--reps",
        "2",
        "--temperatures",
        "0,1",
        "--log",
        dir.path().join("sweep.jsonl").to_str().unwrap(),
        "--out",
        sweep.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: Vec<String> = std::fs::read_to_string(&sweep).unwrap().lines().map(String::from).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,0.000,"), "{rows:?}");

    let binary = rt.block_on(MockServer::constant("1")).unwrap();
    let cfg = study(dir.path(), &model_block(&binary.url()));
    let o = repheur(&[
        "misinfo",
        "--config",
        &cfg,
        "--statements",
        &format!("{FIXTURES}/misinfo_sample.csv"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("model,variant,slice,n_total,n_answered,rr_percent,accuracy,fp"));
    assert!(text.lines().skip(1).all(|l| l.starts_with("mock,")));
}
