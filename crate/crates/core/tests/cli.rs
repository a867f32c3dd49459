mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gcrl::config::{read_yaml_file, Value};
use gcrl::livemetrics::read_stream_file;

const TINY: [&str; 6] = [
    "algorithm.total_steps=300",
    "algorithm.learning_starts=100",
    "algorithm.batch_size=32",
    "algorithm.hidden_sizes=[16,16]",
    "algorithm.eval_interval=100",
    "algorithm.eval_episodes=2",
];

fn gcrl(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcrl"))
        .arg("--conf-dir")
        .arg(common::conf_dir())
        .args(args)
        .env("GCRL_TRACK_ROOT", root)
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn tiny_run(root: &Path, extra: &[&str]) -> (Output, PathBuf) {
    let mut args = vec!["run", "env=PointReach-v0"];
    args.extend(TINY);
    args.extend(extra);
    let out = gcrl(root, &args);
    let stdout = text(&out.stdout);
    let dir = stdout
        .lines()
        .find_map(|l| l.split(" -> ").nth(1))
        .map(PathBuf::from)
        .unwrap_or_default();
    (out, dir)
}

#[test]
fn run_writes_tracked_layout_with_added_key() {
    let root = tempfile::tempdir().unwrap();
    let (out, dir) = tiny_run(root.path(), &["algorithm=sac_var", "++algorithm.weight_critic_var=0.75"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let cfg = read_yaml_file(&dir.join("artifacts").join("config.yaml")).unwrap();
    assert_eq!(cfg.get("algorithm.weight_critic_var"), Some(&Value::Float(0.75)));
    assert_eq!(cfg.get("algorithm.name"), Some(&Value::Str("sac_var".into())));
    let param = std::fs::read_to_string(dir.join("params").join("algorithm.weight_critic_var")).unwrap();
    assert_eq!(param.trim(), "0.75");

    let runs = common::read_filestore(root.path()).unwrap();
    assert_eq!(runs.len(), 1);
    let r = &runs[0];
    assert_eq!(r.status, "3");
    let evals: Vec<i64> = r.metrics["success_rate"].iter().map(|m| m.2).collect();
    assert_eq!(evals, vec![0, 100, 200, 300]);
    assert_eq!(r.metrics["critic_loss"].len(), 200);

    let frames = read_stream_file(&dir.join("artifacts").join("stream.ndjson")).unwrap();
    assert_eq!(frames.len(), 300);
    assert!(frames.iter().enumerate().all(|(i, f)| f.step == i as u64 + 1));
}

#[test]
fn config_errors_exit_2_with_choices() {
    let root = tempfile::tempdir().unwrap();
    let out = gcrl(root.path(), &["run", "algorithm=td3"]);
    assert_eq!(out.status.code(), Some(2));
    let err = text(&out.stderr);
    assert!(err.contains("sac") && err.contains("sac_var"), "{err}");

    let out = gcrl(root.path(), &["run", "algorithm.weight_critic_var=0.5"]);
    assert_eq!(out.status.code(), Some(2), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("++"));

    let out = gcrl(root.path(), &["run", "env=FetchPush-v1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("PlanarPush-v0"));
    assert!(common::read_filestore(root.path()).unwrap().is_empty());
}

#[test]
fn replay_is_reproducible_and_validates_metrics() {
    let root = tempfile::tempdir().unwrap();
    let (out, dir) = tiny_run(root.path(), &[]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stream = dir.join("artifacts").join("stream.ndjson");
    let stream = stream.to_str().unwrap();
    let args = ["view", "--replay", stream, "--once", "--at", "150", "--metrics", "critic_loss,alpha"];
    let a = gcrl(root.path(), &args);
    let b = gcrl(root.path(), &args);
    assert!(a.status.success(), "{}", text(&a.stderr));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let shown = text(&a.stdout);
    assert!(shown.contains("150"), "{shown}");

    let bad = gcrl(root.path(), &["view", "--replay", stream, "--once", "--metrics", "reward"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(text(&bad.stderr).contains("critic_variance_mean"));
}

#[test]
fn sweep_runs_resumes_and_reports() {
    let root = tempfile::tempdir().unwrap();
    let study = root.path().join("tiny.yaml");
    let mut body = String::from("env: PointReach-v0\nalgorithm: sac_var\noverrides:\n");
    for o in TINY {
        body.push_str(&format!("  - {o}\n"));
    }
    body.push_str(
        "study_name: tiny\nmax_trials: 4\nn_jobs: 2\ndirection: maximize\nmin_trials_per_param: 1\nmax_trials_per_param: 3\nobjective_metric: success_rate\nsearch_space:\n  ++algorithm.weight_critic_var:\n    type: categorical\n    choices: [0.0, 1.0]\n",
    );
    std::fs::write(&study, body).unwrap();
    let study = study.to_str().unwrap();

    let out = gcrl(root.path(), &["sweep", study]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let dir = root.path().join(".sweeps").join("tiny");
    let journal = std::fs::read_to_string(dir.join("journal.ndjson")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 4);
    let means = common::journal_means(&journal);
    assert_eq!(common::argmax(&means), report["best"]["index"].as_u64().map(|i| i as usize));

    let runs = common::read_filestore(root.path()).unwrap();
    assert_eq!(runs.len(), 4);
    assert!(runs.iter().all(|r| r.experiment_name == "tiny"));
    let etas: Vec<&str> = runs.iter().map(|r| r.params["algorithm.weight_critic_var"].as_str()).collect();
    assert!(etas.contains(&"0.0") && etas.contains(&"1.0"), "{etas:?}");

    // a finished study resumes to the same state without new trials
    let again = gcrl(root.path(), &["sweep", study]);
    assert!(again.status.success());
    assert_eq!(std::fs::read_to_string(dir.join("journal.ndjson")).unwrap(), journal);
    assert_eq!(common::read_filestore(root.path()).unwrap().len(), 4);
}

#[test]
fn smoke_passes_and_nan_exits_3() {
    let root = tempfile::tempdir().unwrap();
    let ok = gcrl(root.path(), &["test", "smoke"]);
    assert_eq!(ok.status.code(), Some(0), "{}{}", text(&ok.stdout), text(&ok.stderr));
    let nan = gcrl(root.path(), &["test", "smoke", "--inject-nan"]);
    assert_eq!(nan.status.code(), Some(3), "{}", text(&nan.stdout));
    assert!(text(&nan.stdout).contains("non-finite"));
}
