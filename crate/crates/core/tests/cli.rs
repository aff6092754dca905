use std::path::Path;
use std::process::{Command, Output};

fn diagocp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diagocp"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DIAGOCP_THREADS")
        .output()
        .expect("spawn diagocp")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
    "problem": {"kind": "quadratic", "h": [1.0, 4.0], "noise_std_grad": 0.05},
    "optimizer": {"kind": "diag_ocp", "lr": 0.05},
    "max_steps": 20,
    "n_seeds": 2,
    "record_every": 5,
    "sweep": {"coarse_grid": [0.1, 0.01]},
    "compare": {"optimizers": ["sgd", "diag_ocp"]},
    "ablation": {"mu_values": [0.001, 0.0001], "lr": 0.05}
}"#;

#[test]
fn run_writes_steps_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = diagocp(&["run", "--config", &cfg, "--out", "res", "--seed", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let steps = std::fs::read_to_string(dir.path().join("res/steps.csv")).unwrap();
    let mut lines = steps.lines();
    assert_eq!(
        lines.next().unwrap(),
        "run_id,optimizer,lr,mu,seed,step,train_loss,val_loss,grad_norm_sq,step_norm,rho,safeguard_count"
    );
    // 2 seeds x steps {0, 5, 10, 15, 20}
    assert_eq!(lines.count(), 10);
    let summary = std::fs::read_to_string(dir.path().join("res/summary.csv")).unwrap();
    assert!(summary.starts_with("optimizer,lr,final_train,final_val,min_val,min_val_step,diverged"));
    assert!(steps.lines().skip(1).all(|l| l.contains("-s4,") || l.contains("-s5,")));
}

#[test]
fn run_json_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = diagocp(&["run", "--config", &cfg, "--out", "res", "--format", "json"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("res/records.json")).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
}

#[test]
fn sweep_ablation_and_compare_emit_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for (cmd, files) in [
        ("sweep", vec!["sweep.csv", "heatmap.csv", "sweep.json", "summary.csv"]),
        ("ablate-mu", vec!["ablation.csv", "ablation.json", "steps.csv"]),
        ("compare", vec!["sweep.csv", "heatmap.csv", "compare.json", "summary.csv"]),
    ] {
        let out_dir = format!("out-{cmd}");
        let out = diagocp(&[cmd, "--config", &cfg, "--out", &out_dir], dir.path());
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        for f in files {
            assert!(dir.path().join(&out_dir).join(f).exists(), "{cmd} missing {f}");
        }
    }
    let heat = std::fs::read_to_string(dir.path().join("out-compare/heatmap.csv")).unwrap();
    assert!(heat.starts_with("optimizer,lr,val_loss_at_T"));
    // 2 thresholds + control, 2 seeds each
    let abl = std::fs::read_to_string(dir.path().join("out-ablate-mu/ablation.csv")).unwrap();
    assert_eq!(abl.lines().count(), 1 + 6);
}

#[test]
fn verify_commands_report_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    for check in ["lemma1", "hutchinson"] {
        let out = diagocp(&["verify", check, "--out", "v"], dir.path());
        assert!(out.status.success(), "{check}");
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["pass"], true);
        assert!(dir.path().join(format!("v/{check}.json")).exists());
    }
}

#[test]
fn failed_verification_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // a single probe cannot meet a 1e-6 relative tolerance on a dense matrix
    let cfg = write_config(dir.path(), r#"{"hutchinson": {"n_probes": 1, "tolerance": 1e-6}}"#);
    let out = diagocp(&["verify", "hutchinson", "--config", &cfg, "--out", "v"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"optimizer": {"kind": "lbfgs"}, "max_steps": 2}"#);
    let out = diagocp(&["run", "--config", &cfg, "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(line["error"]["kind"], "unknown_optimizer");
    assert!(line["error"]["message"].as_str().unwrap().contains("lbfgs"));

    let bad = write_config(dir.path(), r#"{"no_such_key": 1}"#);
    let out = diagocp(&["run", "--config", &bad], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(line["error"]["kind"], "json");
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let one = diagocp(&["--threads", "1", "compare", "--config", &cfg, "--out", "a"], dir.path());
    let many = Command::new(env!("CARGO_BIN_EXE_diagocp"))
        .args(["compare", "--config", &cfg, "--out", "b"])
        .env("DIAGOCP_THREADS", "4")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(one.status.success() && many.status.success());
    let a = std::fs::read(dir.path().join("a/summary.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/summary.csv")).unwrap();
    assert_eq!(a, b);
}
