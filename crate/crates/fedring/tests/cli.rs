use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fedring(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedring"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FEDRING_SEED")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

const SMALL: &[&str] = &[
    "--users",
    "3",
    "--global-epochs",
    "3",
    "--local-epochs",
    "2",
    "--samples-per-user",
    "60",
    "--features",
    "8",
    "--batch-size",
    "16",
    "--beta",
    "0.1",
];

fn train(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", out];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    fedring(&args, dir)
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "--algorithm",
        "pppml",
        "--global-epochs",
        "5",
        "--cipher",
        "null",
        "--seed",
        "7",
    ];
    ok(&train(dir.path(), "a", &args));
    ok(&train(dir.path(), "b", &args));
    for file in [
        "metrics.csv",
        "history.json",
        "server_model.csv",
        "results.csv",
        "trace.json",
    ] {
        let a = std::fs::read(dir.path().join("a").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let manifest = json(&dir.path().join("a/manifest.json"));
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["config"]["seed"], 7);
    let history = json(&dir.path().join("a/history.json"));
    assert_eq!(history["manifest"], "manifest.json");
    assert_eq!(history["run_id"], manifest["run_id"]);
    let metrics = std::fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap();
    assert!(metrics.starts_with("run_id,epoch,user,train_loss\n"));
    assert!(!metrics.contains('\r'));
    assert_eq!(metrics.lines().count(), 1 + 5 * 3);
}

#[test]
fn two_user_rings_exit_with_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedring(
        &[
            "train",
            "--users",
            "2",
            "--algorithm",
            "pppml",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("N >= 3"));
    assert!(!dir.path().join("x/history.json").exists());
}

fn server_columns(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split_once(',').unwrap().1.to_string())
        .collect()
}

#[test]
fn zero_alpha_matches_fedavg_server_columns() {
    let dir = tempfile::tempdir().unwrap();
    ok(&train(
        dir.path(),
        "p",
        &[
            "--algorithm",
            "pppml",
            "--alpha",
            "0",
            "--cipher",
            "null",
            "--seed",
            "5",
        ],
    ));
    ok(&train(
        dir.path(),
        "f",
        &["--algorithm", "fedavg", "--cipher", "null", "--seed", "5"],
    ));
    assert_eq!(
        server_columns(&dir.path().join("p/server_model.csv")),
        server_columns(&dir.path().join("f/server_model.csv"))
    );
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, extra: &[&str]| {
        let mut args = vec!["train", "--out", out, "--algorithm", "local-only"];
        args.extend_from_slice(SMALL);
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_fedring"))
            .args(&args)
            .current_dir(dir.path())
            .env("FEDRING_SEED", "41")
            .output()
            .unwrap()
    };
    ok(&run("env", &[]));
    assert_eq!(
        json(&dir.path().join("env/manifest.json"))["config"]["seed"],
        41
    );
    ok(&run("flag", &["--seed", "2"]));
    assert_eq!(
        json(&dir.path().join("flag/manifest.json"))["config"]["seed"],
        2
    );
}

#[test]
fn config_files_are_validated_and_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        "{\n  \"users\": 3,\n  \"betta\": 0.1\n}\n",
    )
    .unwrap();
    let out = fedring(&["train", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("betta") && err.contains("line 3"), "{err}");

    std::fs::write(
        dir.path().join("good.json"),
        r#"{"algorithm": "fedavg", "users": 4, "global_epochs": 2, "samples_per_user": 40, "features": 6, "seed": 9}"#,
    )
    .unwrap();
    ok(&fedring(
        &[
            "train",
            "--config",
            "good.json",
            "--users",
            "3",
            "--out",
            "g",
        ],
        dir.path(),
    ));
    let config = &json(&dir.path().join("g/manifest.json"))["config"];
    assert_eq!(config["users"], 3);
    assert_eq!(config["algorithm"], "fedavg");
    assert_eq!(config["seed"], 9);

    let out = fedring(&["train", "--alpha", "-1", "--out", "n"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergent_runs_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = train(
        dir.path(),
        "d",
        &[
            "--algorithm",
            "fedavg",
            "--task",
            "regression",
            "--beta",
            "1e4",
            "--shift",
            "1",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        json(&dir.path().join("d/manifest.json"))["status"],
        "failed"
    );
}

const ATTACK_RUN: &[&str] = &[
    "--users",
    "3",
    "--global-epochs",
    "1",
    "--local-epochs",
    "1",
    "--alpha",
    "0",
    "--beta",
    "0.1",
    "--batch-size",
    "1",
    "--samples-per-user",
    "1",
    "--features",
    "64",
    "--classes",
    "10",
    "--mask-sigma",
    "150",
    "--seed",
    "2",
];

fn attack_run(dir: &Path, out: &str, algorithm: &str) {
    let mut args = vec!["train", "--out", out, "--algorithm", algorithm];
    args.extend_from_slice(ATTACK_RUN);
    ok(&fedring(&args, dir));
}

#[test]
fn attacks_succeed_on_fedavg_and_fail_on_the_ring() {
    let dir = tempfile::tempdir().unwrap();
    attack_run(dir.path(), "fa", "fedavg");
    attack_run(dir.path(), "pa", "pppml");

    ok(&fedring(
        &[
            "attack",
            "--run",
            "fa",
            "--vantage",
            "type1-fedavg",
            "--snapshot-every",
            "100",
        ],
        dir.path(),
    ));
    let plain = json(&dir.path().join("fa/attack.json"));
    assert_eq!(plain["plaintext_available"], true);
    assert_eq!(plain["label_exact"], true);
    let plain_mse = plain["mse"].as_f64().unwrap();
    assert!(plain_mse < 1e-3);
    assert!(dir.path().join("fa/snapshots/final.pgm").exists());

    ok(&fedring(
        &[
            "attack",
            "--run",
            "pa",
            "--vantage",
            "type1-csahe",
            "--index",
            "1",
        ],
        dir.path(),
    ));
    let cipher = json(&dir.path().join("pa/attack.json"));
    assert_eq!(cipher["plaintext_available"], false);
    assert_eq!(cipher["observation"]["kind"], "ciphertext-only");

    ok(&fedring(
        &[
            "attack",
            "--run",
            "pa",
            "--vantage",
            "aggregate",
            "--out",
            "agg",
        ],
        dir.path(),
    ));
    let agg = json(&dir.path().join("agg/attack.json"));
    assert!(agg["mse"].as_f64().unwrap() >= 10.0 * plain_mse);
    assert_eq!(
        agg["run_id"],
        json(&dir.path().join("pa/manifest.json"))["run_id"]
    );

    ok(&fedring(
        &[
            "attack",
            "--run",
            "pa",
            "--vantage",
            "type2-leakedkey",
            "--out",
            "hbc",
            "--iterations",
            "200",
        ],
        dir.path(),
    ));
    assert!(
        json(&dir.path().join("hbc/attack.json"))["mse"]
            .as_f64()
            .unwrap()
            >= 10.0 * plain_mse
    );
}

#[test]
fn attacks_need_a_matching_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedring(
        &["attack", "--run", "missing", "--vantage", "aggregate"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    attack_run(dir.path(), "fa", "fedavg");
    let out = fedring(
        &["attack", "--run", "fa", "--vantage", "aggregate"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("fa/trace.json"), "{ not json").unwrap();
    let out = fedring(
        &["attack", "--run", "fa", "--vantage", "type1-fedavg"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_writes_a_summary_and_rejects_empty_matrices() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("empty.json"),
        r#"{"algorithms": [], "seeds": [0]}"#,
    )
    .unwrap();
    let out = fedring(
        &["compare", "--config", "empty.json", "--out", "e"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    let mut args = vec![
        "compare",
        "--out",
        "c",
        "--algorithms",
        "fedavg,pppml",
        "--seeds",
        "0,1",
        "--cipher",
        "null",
    ];
    args.extend_from_slice(SMALL);
    ok(&fedring(&args, dir.path()));
    let summary = std::fs::read_to_string(dir.path().join("c/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2 * 3);
    assert!(summary.starts_with("run_id,algorithm,seed,user,test_loss,test_accuracy,"));
    let means = std::fs::read_to_string(dir.path().join("c/means.csv")).unwrap();
    assert_eq!(means.lines().count(), 3);
    assert_eq!(
        json(&dir.path().join("c/manifest.json"))["command"],
        "compare"
    );
}
