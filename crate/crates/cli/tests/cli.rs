//! Binary-level integration: subcommand dispatch, exit codes, output
//! files, and the offline guarantee of zero network operations.

use std::path::{Path, PathBuf};
use std::process::Command;

fn credence() -> Command {
    Command::new(env!("CARGO_BIN_EXE_credence"))
}

fn fixtures_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

const FLAGSHIP_TOPIC: &str =
    "investment philosophies of Duan Yongping, Warren Buffett, and Charlie Munger";

#[test]
fn plan_without_topic_exits_2() {
    let status = credence().arg("plan").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn offline_plan_writes_valid_plan_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plan.json");
    let trace = dir.path().join("trace.jsonl");
    let status = credence()
        .args(["plan", FLAGSHIP_TOPIC, "--offline"])
        .args(["--out", out.to_str().unwrap(), "--trace", trace.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let sections = plan["sections"].as_array().unwrap();
    assert_eq!(sections.len(), 6);
    assert_eq!(sections[1]["title"], "Duan Yongping's Investment Philosophy");
    assert!(trace.exists());
}

#[test]
fn offline_answer_reports_scripted_result() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("answer.json");
    let trace = dir.path().join("trace.jsonl");
    let output = credence()
        .args(["answer", "Who was the first person to walk on the Moon?", "--offline"])
        .args(["--out", out.to_str().unwrap(), "--trace", trace.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("Neil Armstrong"), "stdout: {stdout}");

    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(result["answer"], "Neil Armstrong");
    assert_eq!(result["terminated_by"], "final_flag");

    // Single-round deliberation: exactly one THINK line in the trace.
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(trace_text.lines().count(), 1);
    assert!(trace_text.contains("\"kind\":\"THINK\""));
}

#[test]
fn offline_eval_writes_metrics_and_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("metrics.json");
    let records = dir.path().join("records.jsonl");
    let trace = dir.path().join("trace.jsonl");
    let status = credence()
        .args(["eval", "--dataset", fixtures_path("synth20.jsonl").to_str().unwrap()])
        .args(["--offline", "--out", out.to_str().unwrap()])
        .args(["--records", records.to_str().unwrap()])
        .args(["--trace", trace.to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(metrics["n"], 20);
    assert_eq!(metrics["accuracy"], 0.6);
    assert_eq!(metrics["n_bins"], 10);
    assert_eq!(metrics["run_config"]["provider"], "offline-fixture:seed0");
    assert_eq!(metrics["run_config"]["prompt_pack_version"], "v1");
    let bins = metrics["reliability"].as_array().unwrap();
    assert_eq!(bins.len(), 10);
    let total: u64 = bins.iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 20);

    let record_lines: Vec<serde_json::Value> = std::fs::read_to_string(&records)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(record_lines.len(), 20);
    assert_eq!(record_lines[0]["item_id"], "q01");
}

#[test]
fn eval_on_missing_dataset_exits_1() {
    let status = credence()
        .args(["eval", "--dataset", "/nonexistent/data.jsonl", "--offline"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn eval_on_empty_dataset_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("empty.jsonl");
    std::fs::write(&dataset, "").unwrap();
    let output = credence()
        .args(["eval", "--dataset", dataset.to_str().unwrap(), "--offline"])
        .args(["--trace", dir.path().join("t.jsonl").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("empty-input"), "stderr: {stderr}");
}

#[test]
fn unknown_seed_exits_1_and_names_valid_seeds() {
    let output = credence()
        .args(["answer", "q", "--offline", "--seed", "42"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("seed"), "stderr: {stderr}");
}

#[test]
fn fast_seed_produces_report_without_sources() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.md");
    let status = credence()
        .args(["report", FLAGSHIP_TOPIC, "--offline", "--seed", "1"])
        .args(["--out", out.to_str().unwrap()])
        .args(["--trace", dir.path().join("t.jsonl").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("Sources: none"), "fast script gathers no evidence");
    assert!(text.contains("## Conclusion"));
}

/// Offline mode must perform zero network operations: endpoints in the
/// config point at a reserved-IP port that would fail instantly, and the
/// credential variable is unset, so any provider HTTP path would error.
#[test]
fn offline_mode_ignores_unreachable_provider_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.toml");
    std::fs::write(
        &config,
        r#"
[providers.default]
endpoint = "http://127.0.0.1:1/v1/chat"
model_name = "nope"
credential_env_var = "CREDENCE_DEFINITELY_UNSET_VAR"

[providers.search]
endpoint = "http://127.0.0.1:1/search"
"#,
    )
    .unwrap();
    let out = dir.path().join("report.md");
    let status = credence()
        .args(["report", FLAGSHIP_TOPIC, "--offline"])
        .args(["--config", config.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .args(["--trace", dir.path().join("t.jsonl").to_str().unwrap()])
        .env_remove("CREDENCE_DEFINITELY_UNSET_VAR")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(std::fs::read_to_string(&out).unwrap().contains("## Sources"));
}

/// Without --offline and without provider config, commands fail cleanly
/// before attempting anything.
#[test]
fn online_mode_without_providers_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let output = credence()
        .args(["answer", "q"])
        .args(["--trace", dir.path().join("t.jsonl").to_str().unwrap()])
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("--offline"), "stderr: {stderr}");
}

#[test]
fn corpus_directory_override_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.toml");
    std::fs::write(
        &config,
        format!(
            "offline_corpus_dir = {:?}\n",
            fixtures_path("corpus").canonicalize().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("report.md");
    let status = credence()
        .args(["report", FLAGSHIP_TOPIC, "--offline"])
        .args(["--config", config.to_str().unwrap()])
        .args(["--out", out.to_str().unwrap()])
        .args(["--trace", dir.path().join("t.jsonl").to_str().unwrap()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("https://example.org/profiles/duan-yongping"));
}
