use std::path::Path;
use std::process::{Command, Output};

fn survcausal(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_survcausal"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const FAST: &[&str] = &[
    "--taus", "3,6", "--repeats", "2", "--models", "km,cox", "--horizon", "36",
];

fn with_fast<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(FAST.iter().copied()).collect()
}

#[test]
fn simulate_then_run_on_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(&survcausal(
        &["simulate", "--n", "500", "--seed", "3", "--out", "records.csv", "--truth", "truth.json", "--oracle-mc", "100000"],
        d,
    ));
    assert!(stdout.contains("wrote 500 subjects"));
    assert!(stdout.contains("oracle ATE"));
    let header = std::fs::read_to_string(d.join("records.csv")).unwrap();
    assert!(header.starts_with("subject_id,"));

    ok(&survcausal(&with_fast(&["run", "--input", "records.csv", "--out", "out"]), d));
    for f in ["ate_table_3.csv", "ate_table_6.csv", "metrics_3.csv", "manifest.json", "plot_km_3.csv"] {
        assert!(d.join("out").join(f).exists(), "{f} missing");
    }

    // report regenerates the same tables from results.json
    ok(&survcausal(&["report", "--results", "out/results.json", "--out", "again"], d));
    for f in ["ate_table_3.csv", "plot_ate_trend.csv"] {
        assert_eq!(
            std::fs::read(d.join("out").join(f)).unwrap(),
            std::fs::read(d.join("again").join(f)).unwrap()
        );
    }
}

#[test]
fn stage_commands_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"input": {"kind": "synthetic", "n": 400, "horizon": 36}, "out_dir": "cfg_out"}"#;
    std::fs::write(d.join("exp.json"), cfg).unwrap();

    let out = ok(&survcausal(&with_fast(&["preprocess", "--config", "exp.json", "--no-risk-scores"]), d));
    assert!(out.contains("tau 3:"));
    let cohort = std::fs::read_to_string(d.join("cfg_out/cohort_3.csv")).unwrap();
    assert!(!cohort.lines().next().unwrap().contains("z:risk"));

    ok(&survcausal(&with_fast(&["fit", "--config", "exp.json", "--out", "fit"]), d));
    assert!(d.join("fit/fits.json").exists());

    ok(&survcausal(&with_fast(&["evaluate", "--config", "exp.json", "--out", "eval"]), d));
    assert!(d.join("eval/metrics_3.csv").exists());

    ok(&survcausal(
        &with_fast(&["estimate", "--config", "exp.json", "--out", "est", "--estimators", "t_learner,matching_k5", "--seed", "7"]),
        d,
    ));
    let table = std::fs::read_to_string(d.join("est/ate_table_3.csv")).unwrap();
    assert!(table.starts_with("model,t_learner,matching_k5"));
}

#[test]
fn ablate_writes_the_paired_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(&survcausal(
        &["ablate", "--taus", "3", "--repeats", "2", "--models", "cox", "--horizon", "36", "--out", "abl", "--estimators", "t_learner"],
        d,
    ));
    assert!(out.contains("full"));
    assert!(d.join("abl/ablation_3.csv").exists());

    let refused = survcausal(&["ablate", "--no-risk-scores", "--out", "x"], d);
    assert!(!refused.status.success());
}

#[test]
fn bad_arguments_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad_estimator = survcausal(&["run", "--estimators", "x_learner"], d);
    assert!(!bad_estimator.status.success());
    assert!(String::from_utf8_lossy(&bad_estimator.stderr).contains("x_learner"));
    let missing = survcausal(&["run", "--input", "nope.csv"], d);
    assert!(!missing.status.success());
    let threshold = survcausal(&["preprocess", "--threshold-days", "40"], d);
    assert!(!threshold.status.success());
}
