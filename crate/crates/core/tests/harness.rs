use std::fs;
use std::path::Path;

use mtr_core::agent::SacAgent;
use mtr_core::envsim::{ACTION_DIM, OBS_DIM};
use mtr_core::harness::{self, ExperimentConfig};
use mtr_core::replay::{BufferRegistry, BufferSpec, MtrBuffer, Snapshot};
use mtr_core::retention::age_histogram;

fn tiny(buffer: &str, dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        buffer: buffer.into(),
        schedule: "linear".into(),
        total_steps: 3_000,
        buffer_capacity: 1_000,
        n_b: 10,
        warmup: 400,
        eval_every_episodes: 3,
        hidden_width: 16,
        seeds: vec![1, 2],
        out_dir: Some(dir.to_path_buf()),
        ..ExperimentConfig::default()
    }
}

#[test]
fn zero_steps_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        total_steps: 0,
        ..tiny("mtr", dir.path())
    };
    let summary = harness::run_experiment(&config).unwrap();
    assert_eq!((summary.train_rows, summary.eval_rows), (0, 0));
    let train = fs::read_to_string(dir.path().join(harness::TRAIN_LOG)).unwrap();
    assert_eq!(
        train,
        "seed,global_step,episode_index,episode_return,gravity_at_episode_start\n"
    );
    let eval = fs::read_to_string(dir.path().join(harness::EVAL_LOG)).unwrap();
    assert_eq!(eval, "seed,global_step,gravity,episode_return\n");
}

#[test]
fn run_writes_declared_outputs_and_checkpoints_reload() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny("mtr_irm", dir.path());
    let summary = harness::run_experiment(&config).unwrap();
    assert!(summary.diagnostics.is_empty());
    assert_eq!(summary.train_rows, 2 * 15);
    assert_eq!(summary.eval_rows, 2 * 5 * 5);
    for f in [
        harness::TRAIN_LOG,
        harness::EVAL_LOG,
        harness::CONFIG_ECHO,
        harness::AGE_HIST,
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let hist = fs::read_to_string(dir.path().join(harness::AGE_HIST)).unwrap();
    assert!(hist.lines().count() > 1);

    let (build, echoed) = harness::read_config_echo(dir.path()).unwrap();
    assert!(!build.is_empty());
    assert_eq!(echoed, config);

    let ckpt = dir.path().join(harness::CHECKPOINTS).join("seed_2");
    let mut agent = SacAgent::new(OBS_DIM, ACTION_DIM, config.sac_config().unwrap(), 99).unwrap();
    let meta = agent.load_checkpoint(&ckpt).unwrap();
    assert_eq!((meta.seed, meta.global_step), (2, 3_000));
    let trained = harness::run_seed(&config, 2).unwrap();
    assert_eq!(agent.policy.net.params(), trained.agent.policy.net.params());
    assert_eq!(agent.log_alpha, trained.agent.log_alpha);

    let bytes = fs::read(ckpt.join("buffer.bin")).unwrap();
    let snap = Snapshot::read_from(&mut bytes.as_slice()).unwrap();
    let spec = BufferSpec {
        capacity: 1_000,
        n_sub: 10,
        beta_mtr: 0.85,
        seed: 0,
    };
    let mut restored = BufferRegistry::with_builtins()
        .create("mtr", &spec)
        .unwrap();
    restored.restore(snap).unwrap();
    assert_eq!(restored.len(), trained.buffer.len());
    assert_eq!(
        restored.cascade_occupancies(),
        trained.buffer.cascade_occupancies()
    );
}

#[test]
fn logged_gravities_stay_in_range() {
    let dir = tempfile::tempdir().unwrap();
    for schedule in ["fixed", "linear", "sine", "random"] {
        let config = ExperimentConfig {
            schedule: schedule.into(),
            save_checkpoints: false,
            out_dir: Some(dir.path().join(schedule)),
            ..tiny("fifo", dir.path())
        };
        harness::run_experiment(&config).unwrap();
        let rows =
            harness::read_train_log(&dir.path().join(schedule).join(harness::TRAIN_LOG)).unwrap();
        assert!(rows
            .iter()
            .all(|r| (-17.0..=-7.0).contains(&r.gravity_at_episode_start)
                || r.gravity_at_episode_start == -9.81));
    }
}

#[test]
fn invalid_config_is_rejected_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let config = ExperimentConfig {
        beta_mtr: 2.0,
        out_dir: Some(out.clone()),
        ..ExperimentConfig::default()
    };
    assert!(harness::run_experiment(&config).is_err());
    assert!(!out.exists());
}

#[test]
fn aggregate_writes_summary_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for buffer in ["fifo", "mtr"] {
        let out = dir.path().join(buffer);
        let config = ExperimentConfig {
            save_checkpoints: false,
            ..tiny(buffer, &out)
        };
        harness::run_experiment(&config).unwrap();
        runs.push(out);
    }
    let agg = harness::aggregate(&runs, &dir.path().join("agg")).unwrap();
    assert!(agg.summary_csv.is_file());
    assert_eq!(agg.charts.len(), 2);
    for c in &agg.charts {
        let svg = fs::read_to_string(c).unwrap();
        assert!(svg.contains("<polyline"));
    }
    for agent in ["fifo", "mtr"] {
        for series in [harness::SERIES_TRAIN, harness::SERIES_EVAL_MEAN] {
            let rows: Vec<_> = agg
                .rows
                .iter()
                .filter(|r| r.agent == agent && r.series == series)
                .collect();
            assert!(!rows.is_empty());
            assert!(rows.iter().all(|r| r.n_seeds == 2 && r.se >= 0.0));
        }
    }
    let gravity_rows = agg
        .rows
        .iter()
        .filter(|r| r.series == harness::gravity_series(-17.0))
        .count();
    assert_eq!(gravity_rows, 2 * 5);
}

#[test]
fn aggregate_refuses_mismatched_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    harness::run_experiment(&ExperimentConfig {
        save_checkpoints: false,
        ..tiny("fifo", &a)
    })
    .unwrap();
    harness::run_experiment(&ExperimentConfig {
        save_checkpoints: false,
        batch_size: 32,
        ..tiny("mtr", &b)
    })
    .unwrap();
    let err = harness::aggregate(&[a, b], &dir.path().join("agg")).unwrap_err();
    assert!(err.to_string().contains("different settings"), "{err}");
}

#[test]
fn desk_scale_cascade_ages_have_decaying_tail() {
    // desk defaults: N = 20k, n_b = 20, β = 0.85, 201k pushes
    let mut b = MtrBuffer::<u64>::new(20_000, 20, 0.85, 1).unwrap();
    let pushes = 201_000u64;
    for i in 0..pushes {
        b.push(i);
    }
    let ages: Vec<u64> = (1..=20)
        .flat_map(|k| b.sub_buffer(k).map(|&i| pushes - i).collect::<Vec<_>>())
        .collect();
    assert_eq!(ages.len(), 20_000);
    let hist = age_histogram(&ages, 10);
    let counts: Vec<u64> = hist.iter().map(|h| h.count).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert!(counts[0] > 5 * counts[9], "{counts:?}");
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::from_toml_file(&path).unwrap().validate().unwrap();
            n += 1;
        }
    }
    assert!(n >= 2);
}
