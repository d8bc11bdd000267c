mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Output;
use std::thread;
use std::time::{Duration, Instant};

use longdoc_qa::dataset::record::read_records;
use longdoc_qa::eval::parse_csv;
use longdoc_qa::run::state::{RunState, DATASET_FILE};
use serde_json::Value;

fn synth(out: &Path, pages: &str, seed: &str) -> PathBuf {
    let output = run(common::cli()
        .args([
            "synth",
            "--bilingual",
            "--pages",
            pages,
            "--seed",
            seed,
            "--out",
        ])
        .arg(out));
    assert!(
        output.status.success(),
        "synth failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    out.join("config.toml")
}

fn run(cmd: &mut std::process::Command) -> Output {
    cmd.output().expect("spawn longdoc-qa")
}

fn generate(config: &Path, extra: &[&str]) -> Output {
    run(common::cli()
        .arg("generate")
        .args(extra)
        .arg("--config")
        .arg(config))
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn cli_generate_stats_validate_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "15,30", "cli");
    let out = generate(&config, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let dataset = tmp.path().join("run").join(DATASET_FILE);
    let records = read_records(&dataset).unwrap();
    assert!(!records.is_empty());

    let out = run(common::cli()
        .args(["stats", "--format", "json", "--dataset"])
        .arg(&dataset));
    assert!(out.status.success(), "{}", stderr(&out));
    let stats: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        stats["total_questions"].as_u64(),
        Some(records.len() as u64)
    );

    let out = run(common::cli()
        .args(["validate", "--run-dir"])
        .arg(tmp.path().join("run")));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );

    let out = run(common::cli()
        .args(["eval", "--format", "csv", "--config"])
        .arg(&config));
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = String::from_utf8(out.stdout).unwrap();
    let rows = parse_csv(&csv).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(tmp.path().join("run/eval/results.jsonl").is_file());
    assert_eq!(
        fs::read_to_string(tmp.path().join("run/eval/report.csv")).unwrap(),
        csv
    );
}

#[test]
fn validate_flags_evidence_outside_chunk() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "15", "tamper");
    assert!(generate(&config, &[]).status.success());
    let dataset = tmp.path().join("run").join(DATASET_FILE);
    let text = fs::read_to_string(&dataset).unwrap();
    let mut lines: Vec<Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let target = lines
        .iter_mut()
        .find(|r| {
            r["evidence_pages"]
                .as_array()
                .is_some_and(|p| !p.is_empty())
        })
        .expect("an answerable record");
    target["evidence_pages"] = serde_json::json!([99]);
    target["evidence_sources"] = serde_json::json!([{"page": 99, "category": "paragraph"}]);
    let id = target["record_id"].as_str().unwrap().to_string();
    let tampered: String = lines.iter().map(|l| format!("{l}\n")).collect();
    let copy = tmp.path().join("tampered.jsonl");
    fs::write(&copy, tampered).unwrap();

    let out = run(common::cli().args(["validate", "--dataset"]).arg(&copy));
    assert_eq!(out.status.code(), Some(1));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains(&id), "{report}");
}

fn wait_for_commits(run_dir: &Path, min: u64, deadline: Duration) -> bool {
    let start = Instant::now();
    while start.elapsed() < deadline {
        if let Ok(Some(s)) = RunState::load(run_dir) {
            if s.committed_records >= min {
                return true;
            }
        }
        thread::sleep(Duration::from_millis(5));
    }
    false
}

#[test]
fn sigkill_mid_run_then_resume_matches_clean_run() {
    let tmp = tempfile::tempdir().unwrap();
    let clean = synth(&tmp.path().join("clean"), "120,250", "kill");
    let killed = synth(&tmp.path().join("killed"), "120,250", "kill");
    assert!(generate(&clean, &["--workers", "2"]).status.success());

    let mut child = common::cli()
        .args(["generate", "--workers", "2", "--config"])
        .arg(&killed)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let run_dir = tmp.path().join("killed/run");
    assert!(
        wait_for_commits(&run_dir, 1, Duration::from_secs(60)),
        "no commit observed"
    );
    child.kill().unwrap();
    let status = child.wait().unwrap();
    assert!(!status.success(), "run finished before it could be killed");

    let out = generate(&killed, &["--resume", "--workers", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let expected = fs::read(tmp.path().join("clean/run").join(DATASET_FILE)).unwrap();
    let resumed = fs::read(tmp.path().join("killed/run").join(DATASET_FILE)).unwrap();
    assert!(
        resumed == expected,
        "resumed dataset differs from the clean run"
    );
}

#[test]
fn resume_refuses_changed_settings_and_missing_state() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "15", "first");

    let out = generate(&config, &["--resume"]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("nothing to resume"),
        "{}",
        stderr(&out)
    );

    assert!(generate(&config, &[]).status.success());
    let before = fs::read(tmp.path().join("run").join(DATASET_FILE)).unwrap();
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("seed = \"first\"", "seed = \"second\"");
    fs::write(&config, text).unwrap();
    let out = generate(&config, &[]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("different settings"),
        "{}",
        stderr(&out)
    );
    assert_eq!(
        fs::read(tmp.path().join("run").join(DATASET_FILE)).unwrap(),
        before
    );

    // Worker count is not part of the run identity.
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("seed = \"second\"", "seed = \"first\"");
    fs::write(&config, text).unwrap();
    let out = generate(&config, &["--workers", "1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        fs::read(tmp.path().join("run").join(DATASET_FILE)).unwrap(),
        before
    );
}

#[test]
fn fresh_rebuilds_and_keeps_foreign_files() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "15,21", "fresh");
    assert!(generate(&config, &[]).status.success());
    let dataset = tmp.path().join("run").join(DATASET_FILE);
    let first = fs::read(&dataset).unwrap();
    let notes = tmp.path().join("run/notes.txt");
    fs::write(&notes, "keep me").unwrap();

    let out = generate(&config, &["--fresh"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(&dataset).unwrap(), first);
    assert_eq!(fs::read_to_string(&notes).unwrap(), "keep me");
}

#[test]
fn second_generate_is_a_no_op() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "30", "again");
    assert!(generate(&config, &[]).status.success());
    let dataset = tmp.path().join("run").join(DATASET_FILE);
    let first = fs::read(&dataset).unwrap();
    let out = generate(&config, &[]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 committed now"));
    assert_eq!(fs::read(&dataset).unwrap(), first);
}

#[test]
fn invalid_config_names_the_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth(tmp.path(), "15", "bad");
    let text = fs::read_to_string(&config)
        .unwrap()
        .replace("overlap = 10", "overlap = 20");
    fs::write(&config, text).unwrap();
    let out = generate(&config, &[]);
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(
        err.contains("chunk_size") && err.contains("overlap"),
        "{err}"
    );
    assert!(!tmp.path().join("run").exists());
}
