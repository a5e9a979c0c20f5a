use std::path::Path;
use std::process::{Command, Output};

fn fbt(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbt"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = fbt(out, args);
    assert!(
        o.status.success(),
        "fbt {args:?} failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FAST: [&str; 8] = [
    "--set",
    "max_epochs=2",
    "--set",
    "hidden=8",
    "--set",
    "layers=1",
    "--set",
    "attention_dim=8",
];

fn pipeline(out: &Path, seed: &str) {
    ok(out, &["generate", "--n-patients", "500", "--seed", seed]);
    ok(out, &["ingest"]);
    ok(out, &["cohort"]);
    let mut series = vec!["--seed", seed, "--algorithm", "lstm_attn", "--timesteps", "12"];
    series.extend(FAST);
    for stage in ["featurize", "train", "eval", "attention"] {
        let mut args = vec![stage];
        args.extend(&series);
        ok(out, &args);
    }
    for stage in ["featurize", "train", "eval"] {
        ok(out, &[stage, "--seed", seed, "--algorithm", "ridge"]);
    }
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    pipeline(out, "7");
    for f in [
        "patients.csv",
        "events.csv",
        "manifest.csv",
        "ingest_report.txt",
        "cohort.csv",
        "cohort_summary.txt",
        "features_t12.csv",
        "features_aggregated.csv",
        "split.csv",
        "model_lstm_attn-t12-raw.json",
        "eval_lstm_attn-t12-raw.json",
        "predictions_lstm_attn-t12-raw.csv",
        "attention_lstm_attn-t12-raw.tsv",
        "model_ridge-raw.json",
        "coefficients_ridge-raw.csv",
        "eval_ridge-raw.json",
        "train.log",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let log = std::fs::read_to_string(out.join("eval.log")).unwrap();
    assert!(log.contains("[config]\nseed = 7\n"));
    assert!(log.contains("model_ridge-raw.json"), "input hashes listed");
    assert!(!log.contains("differs from the training data"));
    let tsv = std::fs::read_to_string(out.join("attention_lstm_attn-t12-raw.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 13);
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path(), "7");
    pipeline(b.path(), "7");
    let mut compared = 0;
    for entry in std::fs::read_dir(a.path()).unwrap() {
        let name = entry.unwrap().file_name();
        if name.to_string_lossy().ends_with(".log") {
            continue;
        }
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
        compared += 1;
    }
    assert!(compared >= 15);
}

#[test]
fn eval_without_model_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = fbt(dir.path(), &["eval", "--algorithm", "gru", "--timesteps", "72"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("model_gru-t72-raw.json"), "{}", stderr(&o));
}

#[test]
fn conflicting_config_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    for args in [
        &["train", "--setting", "time_aggregated", "--timesteps", "36"][..],
        &["generate", "--algorithm", "lasso", "--timesteps", "12"],
        &["featurize", "--timesteps", "24"],
        &["cohort", "--set", "epochs=3"],
        &["grid", "--set", "grid_timesteps=12,30"],
    ] {
        let o = fbt(&out, args);
        assert!(!o.status.success(), "{args:?}");
        assert!(stderr(&o).starts_with("error: "), "{args:?}");
    }
    assert!(!out.exists());
}

#[test]
fn config_file_then_set_then_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.cfg");
    std::fs::write(
        &file,
        "# experiment\nseed = 3\nalgorithm = gru\ntimesteps = 72\nbatch_size = 16\n",
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fbt"))
        .args(["config", "--config"])
        .arg(&file)
        .args(["--set", "batch_size=32", "--set", "seed=4", "--seed", "5"])
        .output()
        .unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for line in ["seed = 5", "algorithm = gru", "timesteps = 72", "batch_size = 32"] {
        assert!(text.lines().any(|l| l == line), "{line} not in\n{text}");
    }
}

#[test]
fn attention_needs_an_attention_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["generate", "--n-patients", "60"]);
    ok(out, &["cohort"]);
    let mut args = vec!["--algorithm", "gru", "--timesteps", "12"];
    args.extend(FAST);
    for stage in ["featurize", "train"] {
        let mut a = vec![stage];
        a.extend(&args);
        ok(out, &a);
    }
    let mut a = vec!["plot-data"];
    a.extend(&args);
    let o = fbt(out, &a);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no attention"), "{}", stderr(&o));
}

#[test]
fn grid_writes_grouped_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["generate", "--n-patients", "200"]);
    ok(out, &["cohort"]);
    let mut args = vec![
        "grid",
        "--set",
        "grid_timesteps=12",
        "--set",
        "grid_representations=raw",
    ];
    args.extend(FAST);
    ok(out, &args);
    let csv = std::fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 + 4);
    assert!(csv.lines().skip(1).all(|l| l.contains(",ok,")));
    let text = std::fs::read_to_string(out.join("results.txt")).unwrap();
    assert!(text.contains("Time-aggregated") && text.contains("12 timesteps") && text.contains('*'));
}
