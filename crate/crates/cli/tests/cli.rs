//! End-to-end tests of the binary: exit codes, file outputs, and report
//! formats.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hintprep"))
}

fn sample(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../sample")
        .canonicalize()
        .unwrap()
        .join(file)
}

fn write_config(dir: &Path) -> PathBuf {
    let out_dir = dir.join("run");
    let cache_dir = dir.join("cache");
    let text = format!(
        r#"
        [experiment]
        dataset = "{}"
        preparator = "hints"
        rerank = "convergence"
        k_hints = 5
        candidate_source = "from_file"
        output_dir = "{}"

        [client]
        mock_script = "{}"
        cache_dir = "{}"

        [metrics]
        accuracy = true
        "#,
        sample("dataset.jsonl").display(),
        out_dir.display(),
        sample("mock_script.json").display(),
        cache_dir.display(),
    );
    let path = dir.join("exp.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

#[test]
fn run_produces_report_files_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(stdout(&output).contains("Method"));
    for file in [
        "per_question.jsonl",
        "aggregate.json",
        "aggregate.txt",
        "run_meta.json",
    ] {
        assert!(dir.path().join("run").join(file).exists(), "{file} missing");
    }

    // re-render the saved run as markdown
    let report = bin()
        .args(["report", "--format", "markdown", "--run-dir"])
        .arg(dir.path().join("run"))
        .output()
        .unwrap();
    assert!(report.status.success());
    let text = stdout(&report);
    assert!(
        text.starts_with("| Method | #Hints | Ranking | ACC | EM | F1 | PR | RC | CON | SEMSIM |"),
        "{text}"
    );
}

#[test]
fn unknown_flag_exits_one_with_usage() {
    let output = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let err = String::from_utf8_lossy(&output.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn help_exits_zero() {
    let output = bin().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout(&output).contains("Usage"));
}

#[test]
fn missing_run_dir_exits_two() {
    let output = bin()
        .args(["report", "--run-dir", "/nonexistent/run/dir"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn score_hints_writes_scored_dataset_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scored.jsonl");
    let output = bin()
        .args(["score-hints", "--oracle", "exact-match", "--dataset"])
        .arg(sample("dataset.jsonl"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("\"convergence\""));
    assert!(dir.path().join("scored.meta.json").exists());
}

#[test]
fn evaluate_scores_a_predictions_file() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("preds.jsonl");
    std::fs::write(
        &preds,
        concat!(
            "{\"question_id\":\"t1\",\"answer_text\":\"Miami\"}\n",
            "{\"question_id\":\"t2\",\"answer_text\":\"six\"}\n",
            "{\"question_id\":\"t3\",\"answer_text\":\"carole king\"}\n",
        ),
    )
    .unwrap();
    let out = dir.path().join("eval");
    let output = bin()
        .args(["evaluate", "--predictions"])
        .arg(&preds)
        .arg("--dataset")
        .arg(sample("dataset.jsonl"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    // two of three exact matches
    assert!(stdout(&output).contains("66.67"), "{}", stdout(&output));
    assert!(out.join("aggregate.txt").exists());
}
