use std::process::Command;

fn mtr() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mtr"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn verify_exits_zero() {
    let out = mtr().arg("verify").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("checks passed"));
}

#[test]
fn unknown_buffer_is_a_usage_error() {
    let out = mtr().args(["run", "--buffer", "lifo"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lifo"));
    let out = mtr().args(["run", "--no-such-flag"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn run_then_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "buffer_capacity = 1000\nn_b = 10\nwarmup = 300\neval_every_episodes = 4\nhidden_width = 8\n")
        .unwrap();
    let run_dir = dir.path().join("run");
    let out = mtr()
        .args(["run", "--config"])
        .arg(&cfg)
        .args([
            "--buffer",
            "mtr",
            "--schedule",
            "sine",
            "--steps",
            "2400",
            "--seed",
            "1",
            "--seed",
            "4",
            "--out-dir",
        ])
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "train_log.csv",
        "eval_log.csv",
        "config.json",
        "age_hist.csv",
        "checkpoints",
    ] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let echo = std::fs::read_to_string(run_dir.join("config.json")).unwrap();
    assert!(echo.contains("\"buffer_capacity\": 1000"));
    assert!(echo.contains("\"total_steps\": 2400"));
    assert!(echo.contains("build_id"));

    let agg = dir.path().join("agg");
    let out = mtr()
        .args(["aggregate", "--runs"])
        .arg(&run_dir)
        .arg("--out-dir")
        .arg(&agg)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(agg.join("summary.csv").is_file());
    assert!(agg.join("train_eval.svg").is_file());
    assert!(agg.join("eval_by_gravity.svg").is_file());
}

#[test]
fn bad_config_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "n_subbuffers = 3\n").unwrap();
    let out = mtr().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn retention_prints_fill_count_and_survival() {
    let dir = tempfile::tempdir().unwrap();
    let out = mtr()
        .args([
            "retention",
            "--N",
            "200",
            "--nb",
            "5",
            "--beta",
            "0.85",
            "--seeds",
            "4",
            "--pushes",
            "20000",
            "--out-dir",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("fill count: analytic"));
    assert!(stdout.contains("tail slope"));
    assert!(dir.path().join("survival.csv").is_file());
    assert!(dir.path().join("age_hist.csv").is_file());
}
