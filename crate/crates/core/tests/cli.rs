use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bagclean::cli::EvaluationReport;
use bagclean::eval::{ComparisonReport, RunMetrics};

fn bagclean(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bagclean"))
        .args(args)
        .env_remove("BAGCLEAN_LOG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = bagclean(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty(), "data must not go to stdout");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate_into(dir: &Path) -> PathBuf {
    let cfg = dir.join("gen.json");
    fs::write(&cfg, r#"{"n_bags": 60, "rule_coverage": 0.2}"#).unwrap();
    let data = dir.join("data");
    ok(&["generate", "--config", s(&cfg), "--out", s(&data), "--seed", "7"]);
    data
}

fn read_dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generate_is_byte_identical_and_leaves_config_alone() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = generate_into(a.path());
    let db = generate_into(b.path());
    let (fa, fb) = (read_dir_bytes(&da), read_dir_bytes(&db));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["dataset.jsonl", "rules.json", "test.jsonl", "train.jsonl"]);
    assert_eq!(fa, fb);
    assert_eq!(
        fs::read_to_string(a.path().join("gen.json")).unwrap(),
        r#"{"n_bags": 60, "rule_coverage": 0.2}"#
    );
}

#[test]
fn train_evaluate_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_into(dir.path());
    let (train, rules, test) = (
        data.join("train.jsonl"),
        data.join("rules.json"),
        data.join("test.jsonl"),
    );
    let before = fs::read(&train).unwrap();
    let cfg = dir.path().join("train.json");
    fs::write(&cfg, r#"{"eval_data": "data/test.jsonl", "reward_threshold": -1.3}"#).unwrap();

    let run = |mode: &str, seed: &str, out: &Path| {
        ok(&[
            "train",
            "--data",
            s(&train),
            "--rules",
            s(&rules),
            "--mode",
            mode,
            "--episodes",
            "200",
            "--seed",
            seed,
            "--out",
            s(out),
            "--config",
            s(&cfg),
        ]);
    };
    let (pr1, pr1b, v1) = (dir.path().join("pr1"), dir.path().join("pr1b"), dir.path().join("v1"));
    run("pr", "1", &pr1);
    run("pr", "1", &pr1b);
    run("vanilla", "1", &v1);
    assert_eq!(fs::read(&train).unwrap(), before, "input mutated");

    let csv = fs::read_to_string(pr1.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert_eq!(
        csv.lines().next().unwrap(),
        "episode,mean_reward,selection_rate,matched_selection_rate,selection_f1"
    );
    assert_eq!(read_dir_bytes(&pr1), read_dir_bytes(&pr1b));
    let metrics = RunMetrics::load(pr1.join("metrics.json")).unwrap();
    assert_eq!(metrics.episodes.len(), 200);
    assert!((0.0..=1.0).contains(&metrics.pr_auc));

    let eval = dir.path().join("eval");
    ok(&[
        "evaluate",
        "--policy",
        s(&pr1.join("policy.json")),
        "--classifier",
        s(&pr1.join("classifier.json")),
        "--data",
        s(&test),
        "--out",
        s(&eval),
    ]);
    let report: EvaluationReport =
        serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.n_bags, 12);
    assert!(report.selection.is_some());
    assert_eq!(
        (report.pr_auc - metrics.pr_auc).abs(),
        0.0,
        "held-out area must match the training report"
    );
    let curve = fs::read_to_string(eval.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "rank,recall,precision");

    let cmp = dir.path().join("reports/cmp.json");
    ok(&[
        "compare",
        "--runs",
        s(&pr1.join("metrics.json")),
        s(&v1.join("metrics.json")),
        "--out",
        s(&cmp),
    ]);
    let report: ComparisonReport = serde_json::from_str(&fs::read_to_string(&cmp).unwrap()).unwrap();
    assert_eq!(report.runs.len(), 2);
    assert_eq!(report.runs[0].mode, "pr");
    assert_eq!(report.runs[1].mode, "vanilla");
}

#[test]
fn seed_sweep_matches_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_into(dir.path());
    let (train, rules) = (data.join("train.jsonl"), data.join("rules.json"));
    let sweep = dir.path().join("sweep");
    ok(&[
        "train",
        "--data",
        s(&train),
        "--rules",
        s(&rules),
        "--mode",
        "vanilla",
        "--episodes",
        "20",
        "--seeds",
        "3,4,5",
        "--jobs",
        "2",
        "--out",
        s(&sweep),
    ]);
    let single = dir.path().join("single");
    ok(&[
        "train",
        "--data",
        s(&train),
        "--rules",
        s(&rules),
        "--mode",
        "vanilla",
        "--episodes",
        "20",
        "--seed",
        "4",
        "--out",
        s(&single),
    ]);
    assert_eq!(read_dir_bytes(&sweep.join("seed-4")), read_dir_bytes(&single));
    assert!(sweep.join("seed-3/metrics.csv").exists() && sweep.join("seed-5/metrics.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_into(dir.path());
    let rules = data.join("rules.json");
    let out = dir.path().join("o");

    let missing = bagclean(&[
        "train",
        "--data",
        "/no/such/file.jsonl",
        "--rules",
        s(&rules),
        "--mode",
        "pr",
        "--episodes",
        "1",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert_eq!(stderr.trim().lines().count(), 1, "{stderr}");

    assert_eq!(bagclean(&["train", "--bogus"]).status.code(), Some(2));
    assert_eq!(bagclean(&["frobnicate"]).status.code(), Some(2));

    let broken = dir.path().join("broken.jsonl");
    let mut text = fs::read_to_string(data.join("train.jsonl")).unwrap();
    text.push_str("{not json\n");
    fs::write(&broken, text).unwrap();
    let bad = bagclean(&[
        "train",
        "--data",
        s(&broken),
        "--rules",
        s(&rules),
        "--mode",
        "pr",
        "--episodes",
        "1",
        "--seed",
        "1",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("broken.jsonl:"));

    let one_run = bagclean(&["compare", "--runs", s(&rules), "--out", s(&out.join("r.json"))]);
    assert_eq!(one_run.status.code(), Some(1));
}

#[test]
fn log_level_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    fs::write(&cfg, r#"{"n_bags": 10}"#).unwrap();
    let quiet = bagclean(&["generate", "--config", s(&cfg), "--out", s(&dir.path().join("a"))]);
    assert!(quiet.stderr.is_empty());
    let chatty = Command::new(env!("CARGO_BIN_EXE_bagclean"))
        .args(["generate", "--config", s(&cfg), "--out", s(&dir.path().join("b"))])
        .env("BAGCLEAN_LOG", "info")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&chatty.stderr).contains("generated 10 bags"));
    assert!(chatty.stdout.is_empty());
}
