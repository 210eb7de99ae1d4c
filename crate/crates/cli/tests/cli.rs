//! Drives the installed binary through every subcommand, checking outputs,
//! determinism and the exit-code contract (0 ok, 1 data error, 2 usage).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn poolsel(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poolsel"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run poolsel")
}

fn assert_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Writes a small train/test pair under `dir/data` and returns the four paths.
fn synth_pair(dir: &Path) -> [PathBuf; 4] {
    let out = poolsel(
        &[
            "synth",
            "--out-dir",
            "data",
            "--p",
            "2",
            "--beta",
            "1.5,-0.5",
            "--train-n",
            "200",
            "--test-n",
            "80",
            "--seed",
            "4",
        ],
        dir,
    );
    assert_ok(&out);
    [
        dir.join("data/train.csv"),
        dir.join("data/train.manifest.json"),
        dir.join("data/test.csv"),
        dir.join("data/test.manifest.json"),
    ]
}

#[test]
fn synth_is_reproducible_and_validates_flags() {
    let dir = tempfile::tempdir().unwrap();
    let first = synth_pair(dir.path());

    let out = poolsel(
        &[
            "synth", "--out-dir", "again", "--p", "2", "--beta", "1.5,-0.5", "--train-n", "200",
            "--test-n", "80", "--seed", "4",
        ],
        dir.path(),
    );
    assert_ok(&out);
    for (original, name) in first.iter().zip(["train.csv", "train.manifest.json", "test.csv", "test.manifest.json"]) {
        let rerun = dir.path().join("again").join(name);
        assert_eq!(
            std::fs::read(original).unwrap(),
            std::fs::read(&rerun).unwrap(),
            "{name} differs between identical runs"
        );
    }

    let manifest = std::fs::read_to_string(&first[1]).unwrap();
    assert!(manifest.contains("\"synthetic\""));

    for bad in [
        vec!["synth", "--out-dir", "x", "--train-n", "0"],
        vec!["synth", "--out-dir", "x", "--p", "0"],
        vec!["synth", "--out-dir", "x", "--p", "3", "--beta", "1.0"],
        vec!["synth", "--out-dir", "x", "--min-score", "9", "--max-score", "3"],
    ] {
        assert_code(&poolsel(&bad, dir.path()), 2);
    }
}

#[test]
fn synth_without_noise_ties_scores_to_the_feature() {
    let dir = tempfile::tempdir().unwrap();
    let out = poolsel(
        &[
            "synth", "--out-dir", "data", "--train-n", "50", "--test-n", "10", "--noise-sd", "0",
        ],
        dir.path(),
    );
    assert_ok(&out);

    let train = poolsel::load_dataset(
        dir.path().join("data/train.csv"),
        dir.path().join("data/train.manifest.json"),
    )
    .unwrap();
    let mut rows: Vec<(f64, i32)> = (0..train.n())
        .map(|i| (train.features().row(i)[0], train.scores()[i]))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert!(rows.windows(2).all(|w| w[0].1 <= w[1].1));
}

#[test]
fn select_writes_the_design_and_rejects_misuse() {
    let dir = tempfile::tempdir().unwrap();
    synth_pair(dir.path());
    let base = [
        "select",
        "--features",
        "data/train.csv",
        "--manifest",
        "data/train.manifest.json",
    ];

    let args = [&base[..], &["--algorithm", "fedorov", "--m", "20", "--seed", "7", "--out", "design.txt"]].concat();
    let stdout = assert_ok(&poolsel(&args, dir.path()));
    assert!(stdout.contains("algorithm: fedorov"));
    assert!(stdout.contains("m: 20"));
    assert!(stdout.contains("criterion value: "));

    let design = std::fs::read_to_string(dir.path().join("design.txt")).unwrap();
    let ids: Vec<&str> = design.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(ids.len(), 20);

    let rerun = [&base[..], &["--algorithm", "fedorov", "--m", "20", "--seed", "7", "--out", "rerun.txt"]].concat();
    assert_ok(&poolsel(&rerun, dir.path()));
    assert_eq!(
        std::fs::read(dir.path().join("design.txt")).unwrap(),
        std::fs::read(dir.path().join("rerun.txt")).unwrap()
    );

    for (extra, code) in [
        (vec!["--algorithm", "fedorov", "--m", "0", "--out", "x.txt"], 2),
        (vec!["--algorithm", "fedorov", "--m", "500", "--out", "x.txt"], 2),
        (vec!["--algorithm", "sobol", "--m", "5", "--out", "x.txt"], 2),
        (
            vec!["--algorithm", "kennard_stone", "--m", "30", "--augment", "design.txt", "--out", "x.txt"],
            2,
        ),
    ] {
        let args = [&base[..], &extra[..]].concat();
        assert_code(&poolsel(&args, dir.path()), code);
    }

    let missing = [
        "select", "--features", "missing.csv", "--manifest", "data/train.manifest.json",
        "--algorithm", "fedorov", "--m", "5", "--out", "x.txt",
    ];
    assert_code(&poolsel(&missing, dir.path()), 1);
}

#[test]
fn select_augment_keeps_the_base_rows() {
    let dir = tempfile::tempdir().unwrap();
    synth_pair(dir.path());
    let base = [
        "select",
        "--features",
        "data/train.csv",
        "--manifest",
        "data/train.manifest.json",
        "--algorithm",
        "fedorov",
    ];

    let first = [&base[..], &["--m", "10", "--seed", "3", "--out", "base.txt"]].concat();
    assert_ok(&poolsel(&first, dir.path()));
    let second = [&base[..], &["--m", "25", "--seed", "3", "--augment", "base.txt", "--out", "grown.txt"]].concat();
    let stdout = assert_ok(&poolsel(&second, dir.path()));
    assert!(stdout.contains("m: 25"));

    let read_ids = |name: &str| -> Vec<String> {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    };
    let base_ids = read_ids("base.txt");
    let grown_ids = read_ids("grown.txt");
    assert_eq!(grown_ids.len(), 25);
    assert!(base_ids.iter().all(|id| grown_ids.contains(id)));

    let shrink = [&base[..], &["--m", "10", "--seed", "3", "--augment", "base.txt", "--out", "x.txt"]].concat();
    assert_code(&poolsel(&shrink, dir.path()), 2);
}

#[test]
fn fit_reports_train_r_and_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    synth_pair(dir.path());
    let select = [
        "select", "--features", "data/train.csv", "--manifest", "data/train.manifest.json",
        "--algorithm", "kennard_stone", "--m", "30", "--out", "design.txt",
    ];
    assert_ok(&poolsel(&select, dir.path()));

    let fit = [
        "fit", "--features", "data/train.csv", "--manifest", "data/train.manifest.json",
        "--design", "design.txt", "--lambda", "0.5", "--out", "model.json",
    ];
    let stdout = assert_ok(&poolsel(&fit, dir.path()));
    assert!(stdout.contains("train r: "));
    assert!(stdout.contains("on 30 rows"));

    let json = std::fs::read_to_string(dir.path().join("model.json")).unwrap();
    let model = poolsel::RidgeModel::from_json(&json).unwrap();
    assert_eq!(model.p(), 2);
    assert_eq!(model.lambda(), 0.5);

    let bad_lambda = [
        "fit", "--features", "data/train.csv", "--manifest", "data/train.manifest.json",
        "--lambda", "-1", "--out", "x.json",
    ];
    assert_code(&poolsel(&bad_lambda, dir.path()), 2);
}

fn simulate_args<'a>(out: &'a str, algorithms: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut args = vec![
        "simulate",
        "--train-features",
        "data/train.csv",
        "--train-manifest",
        "data/train.manifest.json",
        "--test-features",
        "data/test.csv",
        "--test-manifest",
        "data/test.manifest.json",
        "--m-grid",
        "10,20",
        "--iterations",
        "2",
        "--algorithms",
        algorithms,
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    args
}

#[test]
fn simulate_writes_identical_trials_on_rerun_and_in_parallel() {
    let dir = tempfile::tempdir().unwrap();
    synth_pair(dir.path());

    let stdout = assert_ok(&poolsel(&simulate_args("trials.csv", "random,fedorov", &[]), dir.path()));
    assert!(stdout.contains("8 trials, 0 skipped"));
    let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 9);

    assert_ok(&poolsel(&simulate_args("rerun.csv", "random,fedorov", &[]), dir.path()));
    assert_ok(&poolsel(&simulate_args("parallel.csv", "random,fedorov", &["--jobs", "2"]), dir.path()));
    let bytes = std::fs::read(dir.path().join("trials.csv")).unwrap();
    assert_eq!(bytes, std::fs::read(dir.path().join("rerun.csv")).unwrap());
    assert_eq!(bytes, std::fs::read(dir.path().join("parallel.csv")).unwrap());
}

#[test]
fn simulate_rejects_a_test_set_with_different_features() {
    let dir = tempfile::tempdir().unwrap();
    synth_pair(dir.path());
    let wide = [
        "synth", "--out-dir", "wide", "--p", "3", "--beta", "1.0,0.5,-0.5", "--train-n", "60",
        "--test-n", "30",
    ];
    assert_ok(&poolsel(&wide, dir.path()));

    let mismatched = [
        "simulate",
        "--train-features", "data/train.csv",
        "--train-manifest", "data/train.manifest.json",
        "--test-features", "wide/test.csv",
        "--test-manifest", "wide/test.manifest.json",
        "--m-grid", "10",
        "--iterations", "1",
        "--out", "x.csv",
    ];
    assert_code(&poolsel(&mismatched, dir.path()), 1);

    let dup = simulate_args("x.csv", "random,random", &[]);
    assert_code(&poolsel(&dup, dir.path()), 2);
}

#[test]
fn report_writes_artifacts_and_needs_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    synth_pair(dir.path());
    assert_ok(&poolsel(&simulate_args("trials.csv", "random,fedorov", &[]), dir.path()));

    let report = [
        "report",
        "--trials",
        "trials.csv",
        "--out-dir",
        "report",
        "--persistence-features",
        "data/train.csv",
        "--persistence-manifest",
        "data/train.manifest.json",
        "--persistence-step",
        "2",
    ];
    let stdout = assert_ok(&poolsel(&report, dir.path()));
    assert!(stdout.contains("percent change in mean r vs random"));
    for name in [
        "summary.csv",
        "percent_change.txt",
        "mean_synthetic_fedorov.csv",
        "sd_synthetic_fedorov.csv",
        "mean_synthetic_random.csv",
        "sd_synthetic_random.csv",
        "persistence_kennard_stone.csv",
    ] {
        assert!(dir.path().join("report").join(name).exists(), "missing {name}");
    }

    let summary = std::fs::read_to_string(dir.path().join("report/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);

    let fed_only = simulate_args("fed.csv", "fedorov", &[]);
    assert_ok(&poolsel(&fed_only, dir.path()));
    let out = poolsel(&["report", "--trials", "fed.csv", "--out-dir", "r2"], dir.path());
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("baseline"));
}
