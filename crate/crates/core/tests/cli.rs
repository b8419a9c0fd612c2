use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn adress(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adress"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(adress(&["--help"]).status.code(), Some(0));
    assert_eq!(adress(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(adress(&["evaluate", "--task", "7"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = adress(&[
        "evaluate",
        "--predictions",
        path(&missing),
        "--manifest",
        path(&missing),
        "--task",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn synth_run_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = adress(&[
        "synth",
        "--out-dir",
        path(&corpus),
        "--n-per-class",
        "6",
        "--test-per-class",
        "2",
        "--duration-secs",
        "5",
        "--seed",
        "2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["manifest.csv", "train.csv", "test.csv"] {
        assert!(corpus.join(f).exists(), "{f}");
    }

    let run = dir.path().join("run");
    let out = adress(&[
        "pipeline",
        "run",
        "--train",
        path(&corpus.join("train.csv")),
        "--test",
        path(&corpus.join("test.csv")),
        "--task",
        "regression",
        "--out-dir",
        path(&run),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "config.toml",
        "run.json",
        "adr.model",
        "learner.model",
        "predictions.csv",
        "report.csv",
    ] {
        assert!(run.join(f).exists(), "{f}");
    }

    let again = dir.path().join("again");
    let out = adress(&[
        "evaluate",
        "--predictions",
        path(&run.join("predictions.csv")),
        "--manifest",
        path(&corpus.join("test.csv")),
        "--task",
        "2",
        "--out-dir",
        path(&again),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        fs::read(run.join("report.csv")).unwrap(),
        fs::read(again.join("report.csv")).unwrap()
    );
}

#[test]
fn match_writes_pairs_and_balance() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = dir.path().join("cohort.csv");
    let mut rows = String::from("id,age,gender,group\n");
    for i in 0..12 {
        rows.push_str(&format!(
            "ad{i},{},{},AD\n",
            70 + i,
            if i % 2 == 0 { "F" } else { "M" }
        ));
    }
    for i in 0..30 {
        rows.push_str(&format!(
            "cn{i},{},{},CN\n",
            62 + i,
            if i % 3 == 0 { "F" } else { "M" }
        ));
    }
    fs::write(&cohort, rows).unwrap();
    let out_dir = dir.path().join("matched");
    let out = adress(&[
        "match",
        "--cohort",
        path(&cohort),
        "--out-dir",
        path(&out_dir),
        "--seed",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let pairs = fs::read_to_string(out_dir.join("matched.csv")).unwrap();
    assert!(pairs.starts_with("treated_id,control_id,logit_distance\n"));
    assert!(pairs.lines().count() > 1);
    assert!(out_dir.join("balance_before.csv").exists());
    assert!(out_dir.join("balance_after.csv").exists());

    // Perfectly separated groups are a numerical failure.
    let mut rows = String::from("id,age,gender,group\n");
    for i in 0..5 {
        rows.push_str(&format!("ad{i},{},F,AD\n", 80 + i));
        rows.push_str(&format!("cn{i},{},F,CN\n", 60 + i));
    }
    fs::write(&cohort, rows).unwrap();
    let out = adress(&[
        "match",
        "--cohort",
        path(&cohort),
        "--out-dir",
        path(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
