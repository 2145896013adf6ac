use std::path::Path;
use std::process::{Command, Output};

fn wpsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wpsc"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn help_exits_cleanly() {
    let out = wpsc(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["solve", "deploy", "sweep-market", "sweep-deploy", "verify"] {
        assert!(text.contains(cmd), "{text}");
    }
}

#[test]
fn verify_passes_on_the_default_configuration() {
    let out = wpsc(&["verify", "--reps", "8"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert_eq!(text.matches("PASS").count(), 6, "{text}");
}

#[test]
fn verify_rejects_a_manipulable_mechanism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "opt.json",
        r#"{"verify_mechanism": "opt", "n_workers": 10}"#,
    );
    let out = wpsc(&["verify", "--config", &cfg, "--reps", "4", "--grid", "11"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(1), "{text}");
    assert!(
        text.contains("first failing property: strategyproofness (instance seed"),
        "{text}"
    );
    assert!(text.contains("by reporting"), "{text}");
}

#[test]
fn invalid_configuration_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"alpha": 1.5}"#);
    let out = wpsc(&["solve", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pathloss_alpha must be ≥ 2"));

    let cfg = write(dir.path(), "typo.json", r#"{"seeed": 1}"#);
    let out = wpsc(&["sweep-market", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("seeed") && err.contains("valid keys"), "{err}");
}

#[test]
fn solve_and_deploy_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"n_workers": 12, "mechanism": "opt"}"#,
    );
    let out = wpsc(&["solve", "--config", &cfg, "--seed", "5"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rates"].as_array().unwrap().len(), 12);
    assert!(v["pc_star"].as_f64().unwrap() > 0.0);

    let out = wpsc(&[
        "deploy",
        "--config",
        &cfg,
        "--seed",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("deploy.json")).unwrap()).unwrap();
    assert_eq!(v["mechanism_name"], "opt");
}

#[test]
fn sweep_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"n_values": [4, 9], "alpha_values": [2, 3], "seed": 3}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let status = wpsc(&[
            "sweep-deploy",
            "--config",
            &cfg,
            "--reps",
            "3",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
        let status = wpsc(&[
            "sweep-market",
            "--config",
            &cfg,
            "--reps",
            "3",
            "--format",
            "json",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(status.status.success());
    }
    for file in [
        "sweep_deploy_raw.csv",
        "sweep_deploy_aggregate.csv",
        "sweep_market_summary.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
    let raw = std::fs::read_to_string(a.join("sweep_deploy_raw.csv")).unwrap();
    let mut lines = raw.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(
        lines.next().unwrap(),
        "n,alpha,seed,pc_star,platform_utility,mean_worker_utility,employed,med_utility,opt_utility,rel_diff,prop2_slack"
    );
    assert_eq!(lines.count(), 12);
}
