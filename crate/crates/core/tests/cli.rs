mod support;

use std::process::{Command, Output};

use riskscope::llm::API_KEY_ENV;
use support::*;

fn riskscope(args: &[&str], out: &std::path::Path) -> Output {
    let config = fixture_dir().join("config.toml");
    let output_dir = format!("output_dir={}", toml_string(&out.display().to_string()));
    Command::new(env!("CARGO_BIN_EXE_riskscope"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .args(["--set", &output_dir])
        .env_remove(API_KEY_ENV)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn all_stages_then_up_to_date() {
    let dir = tempfile::tempdir().unwrap();
    let first = riskscope(&["all"], dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let lines = String::from_utf8(first.stdout).unwrap();
    assert_eq!(lines.lines().count(), 10);
    assert!(lines.lines().all(|l| l.contains(" done ")));

    let again = riskscope(&["all"], dir.path());
    let lines = String::from_utf8(again.stdout).unwrap();
    assert!(lines.lines().all(|l| l.contains("up-to-date") && l.contains("provider_calls=0")), "{lines}");
}

#[test]
fn config_errors_exit_2_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad_type = riskscope(&["chunk", "--set", "chunking.input_budget=\"many\""], dir.path());
    assert_eq!(bad_type.status.code(), Some(2));
    assert!(stderr(&bad_type).contains("chunking.input_budget"), "{}", stderr(&bad_type));

    let unknown = riskscope(&["chunk", "--set", "chunking.budget=10"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("budget"), "{}", stderr(&unknown));

    let live = riskscope(&["generate", "--set", "provider.kind=\"live\""], dir.path());
    assert_eq!(live.status.code(), Some(2));
    assert!(stderr(&live).contains(API_KEY_ENV), "{}", stderr(&live));

    let missing = Command::new(env!("CARGO_BIN_EXE_riskscope"))
        .args(["all", "--config", "/nonexistent/riskscope.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn missing_upstream_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskscope(&["regress"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("run `panel` first"), "{}", stderr(&o));
}

#[test]
fn unreachable_provider_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["ingest", "chunk"] {
        assert_eq!(riskscope(&[stage], dir.path()).status.code(), Some(0));
    }
    let config = fixture_dir().join("config.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_riskscope"))
        .arg("generate")
        .arg("--config")
        .arg(&config)
        .args(["--set", &format!("output_dir={}", toml_string(&dir.path().display().to_string()))])
        .args(["--set", "provider.kind=\"live\"", "--set", "provider.endpoint=\"http://127.0.0.1:9/v1/chat/completions\""])
        .args(["--set", "provider.retry.max_attempts=1"])
        .env(API_KEY_ENV, "test-key")
        .env("RUST_LOG", "off")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(!dir.path().join("generate/documents.jsonl").exists());
}

#[test]
fn every_spec_failing_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let o = riskscope(&["all", "--set", "estimation.lead=40"], dir.path());
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("every regress specification failed"), "{}", stderr(&o));
}
