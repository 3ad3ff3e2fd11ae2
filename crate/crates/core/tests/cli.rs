//! Contract tests for the `prefrank` binary: artifacts, exit codes, replay.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn prefrank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefrank"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

struct Fixture {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    /// Small synthetic study with a dev split.
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let out = prefrank(&[
            "synth",
            "--systems",
            "12",
            "--utterances",
            "5",
            "--listeners",
            "30",
            "--dev-ratings",
            "4",
            "--seed",
            "3",
            "-o",
            &s(&root.join("data")),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { _tmp: tmp, root }
    }

    fn path(&self, rel: &str) -> String {
        s(&self.root.join(rel))
    }
}

#[test]
fn synth_writes_data_truth_and_manifest_deterministically() {
    let f = Fixture::new();
    let again = f.path("again");
    assert_eq!(
        code(&prefrank(&[
            "synth",
            "--systems",
            "12",
            "--utterances",
            "5",
            "--listeners",
            "30",
            "--dev-ratings",
            "4",
            "--seed",
            "3",
            "-o",
            &again,
        ])),
        0
    );
    for file in ["ratings.csv", "latent.csv", "dev.csv"] {
        let a = std::fs::read(f.root.join("data").join(file)).unwrap();
        let b = std::fs::read(Path::new(&again).join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let ratings = std::fs::read_to_string(f.root.join("data/ratings.csv")).unwrap();
    assert!(ratings.starts_with("system_id,utterance_id,listener_id,score\n"));
    let latent = std::fs::read_to_string(f.root.join("data/latent.csv")).unwrap();
    assert!(latent.starts_with("system_id,latent_quality\n"));
    assert_eq!(latent.lines().count(), 13);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.root.join("data/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config"]["n_systems"], 12);
}

#[test]
fn invalid_flags_are_usage_errors() {
    let out = prefrank(&["synth", "--systems", "0"]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());
    assert_eq!(code(&prefrank(&["simulate", "--method", "link"])), 1);
    assert_eq!(code(&prefrank(&["--help"])), 0);
    assert_eq!(code(&prefrank(&["--version"])), 0);
}

#[test]
fn simulate_rejects_k_that_breaks_divisibility() {
    let f = Fixture::new();
    let out = prefrank(&[
        "simulate",
        "--data",
        &f.path("data/ratings.csv"),
        "--method",
        "bs",
        "--k",
        "100",
        "-o",
        &f.path("sim"),
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("multiple of C(12, 2) = 66"), "{err}");
}

#[test]
fn simulate_writes_one_summary_row_per_k() {
    let f = Fixture::new();
    let dir = f.path("sim");
    let out = prefrank(&[
        "simulate",
        "--data",
        &f.path("data/ratings.csv"),
        "--truth",
        &f.path("data/latent.csv"),
        "--method",
        "link",
        "--agg",
        "btl",
        "--k",
        "12,24,60,120,600,2112",
        "--runs",
        "5",
        "--same-listener",
        "--svg",
        "-o",
        &dir,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(Path::new(&dir).join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(
        lines[0],
        "method,aggregator,same_listener,k,mean_srcc,sd_srcc,n_ok"
    );
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("link,btl,true,12,"));
    let results = std::fs::read_to_string(Path::new(&dir).join("results.csv")).unwrap();
    assert_eq!(
        results.lines().next().unwrap(),
        "method,aggregator,same_listener,k,run,srcc,fallbacks,status"
    );
    assert_eq!(results.lines().count(), 31);
    assert!(std::fs::read_to_string(Path::new(&dir).join("chart.svg"))
        .unwrap()
        .contains("<polyline"));
}

#[test]
fn simulate_exits_two_when_runs_fail() {
    let f = Fixture::new();
    let out = prefrank(&[
        "simulate",
        "--data",
        &f.path("data/ratings.csv"),
        "--method",
        "rand",
        "--agg",
        "btl",
        "--btl-prior",
        "0",
        "--k",
        "2",
        "--runs",
        "3",
        "-o",
        &f.path("sim"),
    ]);
    assert_eq!(code(&out), 2);
    let results = std::fs::read_to_string(f.root.join("sim/results.csv")).unwrap();
    assert!(results.contains(",error: "));
}

#[test]
fn missing_input_is_an_io_error() {
    let f = Fixture::new();
    let out = prefrank(&[
        "simulate",
        "--data",
        &f.path("nope.csv"),
        "--method",
        "bs",
        "--k",
        "66",
        "-o",
        &f.path("sim"),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn train_eval_and_ttest_pipeline() {
    let f = Fixture::new();
    let model = f.path("model");
    let out = prefrank(&[
        "train",
        "--data",
        &f.path("data/ratings.csv"),
        "--epochs",
        "30",
        "-o",
        &model,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(Path::new(&model).join("theta.csv"))
        .unwrap()
        .starts_with("utterance_id,theta\n"));
    assert!(std::fs::read_to_string(Path::new(&model).join("bias.csv"))
        .unwrap()
        .starts_with("listener_id,bias\n"));

    let eval = |extra: &[&str], dir: &str| {
        let (data, truth) = (f.path("data/ratings.csv"), f.path("data/latent.csv"));
        let mut args = vec![
            "eval", "--model", &model, "--data", &data, "--truth", &truth,
        ];
        args.extend_from_slice(extra);
        let d = f.path(dir);
        args.extend_from_slice(&["-o", &d]);
        let out = prefrank(&args);
        (
            code(&out),
            String::from_utf8_lossy(&out.stderr).into_owned(),
        )
    };
    let dev = f.path("data/dev.csv");
    let (c, err) = eval(
        &[
            "--dev",
            &dev,
            "--method",
            "bs",
            "--threshold",
            "eer",
            "--agg",
            "dc",
            "--repeats",
            "20",
        ],
        "eer",
    );
    assert_eq!(c, 0, "{err}");
    let results = std::fs::read_to_string(f.root.join("eer/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 21);
    let thresholds: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.root.join("eer/thresholds.json")).unwrap())
            .unwrap();
    assert!(
        thresholds["t_lose"].as_f64().unwrap() <= 0.0
            && thresholds["t_win"].as_f64().unwrap() >= 0.0
    );

    let (c, _) = eval(
        &[
            "--method",
            "bs",
            "--threshold",
            "nd",
            "--agg",
            "btl",
            "--repeats",
            "20",
        ],
        "nd",
    );
    assert_eq!(c, 0);
    let (c, _) = eval(&["--agg", "mean"], "mean");
    assert_eq!(c, 0);
    let (c, err) = eval(&["--agg", "ps", "--threshold", "er"], "bad");
    assert_eq!(c, 1);
    assert!(err.contains("ps"), "{err}");
    let (c, _) = eval(&["--agg", "dc"], "bad2");
    assert_eq!(c, 1);
    let (c, _) = eval(&["--threshold", "eer", "--agg", "dc"], "bad3");
    assert_eq!(c, 1);

    let a = f.path("eer/results.csv");
    let same = prefrank(&["ttest", &a, &a]);
    assert_ne!(code(&same), 0);
    assert!(String::from_utf8_lossy(&same.stderr).contains("zero variance"));
    let diff = prefrank(&["ttest", &a, &f.path("nd/results.csv")]);
    assert_eq!(code(&diff), 0, "{}", String::from_utf8_lossy(&diff.stderr));
    let report: serde_json::Value = serde_json::from_slice(&diff.stdout).unwrap();
    assert_eq!(report["n"], 20);
    assert_eq!(report["df"], 19.0);
}

#[test]
fn replay_reproduces_outputs() {
    let f = Fixture::new();
    let dir = f.path("plan");
    let out = prefrank(&[
        "plan",
        "--method",
        "link",
        "--k",
        "36",
        "--data",
        &f.path("data/ratings.csv"),
        "--same-listener",
        "--seed",
        "8",
        "-o",
        &dir,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let re = f.path("plan_again");
    assert_eq!(
        code(&prefrank(&[
            "replay",
            &format!("{dir}/manifest.json"),
            "-o",
            &re
        ])),
        0
    );
    for file in ["plan.csv", "pairs.csv"] {
        let a = std::fs::read(Path::new(&dir).join(file)).unwrap();
        let b = std::fs::read(Path::new(&re).join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let plan = std::fs::read_to_string(Path::new(&dir).join("plan.csv")).unwrap();
    assert!(plan.starts_with("system_a,system_b,count\n"));
}

#[test]
fn chart_merges_summaries() {
    let f = Fixture::new();
    for (agg, dir) in [("dc", "a"), ("wc", "b")] {
        let out = prefrank(&[
            "simulate",
            "--data",
            &f.path("data/ratings.csv"),
            "--method",
            "rand",
            "--agg",
            agg,
            "--k",
            "12,120",
            "--runs",
            "4",
            "-o",
            &f.path(dir),
        ]);
        assert_eq!(code(&out), 0);
    }
    let svg = f.path("fig/curves.svg");
    assert_eq!(
        code(&prefrank(&[
            "chart",
            &f.path("a/summary.csv"),
            &f.path("b/summary.csv"),
            "-o",
            &svg
        ])),
        0
    );
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.contains("rand+dc") && text.contains("rand+wc"));
}
