use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diffmotion::cli::{evaluate_predictions, load_dataset};
use diffmotion::config::RunConfig;
use diffmotion::data::load_motion;
use diffmotion::metrics::records_csv;
use diffmotion::sampling::{PredictionMeta, PredictionSet, WindowSource};
use diffmotion::schedule::ScheduleKind;

const TINY: &str = r#"{
  "synth": {"joints": 3, "history": 4, "future": 4, "clips": 12, "modes": 2, "seed": 5},
  "generator": {
    "transformer": {"layers": 1, "latent_dim": 8, "heads": 2, "ff_dim": 8},
    "refinement": {"stages": 1, "blocks_per_stage": 1, "latent_dim": 6},
    "history": 4, "future": 4, "joints": 3
  },
  "train": {"epochs": 2, "batch_size": 4, "diffusion_steps": 5, "seed": 1},
  "data": {"test_fraction": 0.25},
  "eval": {"samples": 3, "seed": 2}
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diffmotion"))
        .current_dir(dir)
        .env_remove("DIFFMOTION_CONFIG")
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("spawn")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), TINY).unwrap();
    ok(dir.path(), &["--config", "cfg.json", "datagen", "--out", "data.dmotion"]);
    dir
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn train(dir: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["--config", "cfg.json", "train", "--data", "data.dmotion", "--out-dir", out];
    args.extend_from_slice(extra);
    ok(dir, &args);
    dir.join(out)
}

#[test]
fn datagen_is_deterministic_and_validated() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "cfg.json", "datagen", "--out", "again.dmotion"]);
    assert_eq!(read(d.join("data.dmotion")), read(d.join("again.dmotion")));
    assert_eq!(load_motion(&d.join("data.dmotion")).unwrap().clips.len(), 12);

    let bad = run(d, &["--config", "cfg.json", "datagen", "--joints", "0", "--out", "bad.dmotion"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(!d.join("bad.dmotion").exists());
    assert!(!bad.stderr.is_empty());
}

#[test]
fn usage_and_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["nonsense"]).status.code(), Some(1));
    std::fs::write(d.join("typo.json"), r#"{"train": {"epoch": 3}}"#).unwrap();
    assert_eq!(run(d, &["--config", "typo.json", "datagen", "--out", "x"]).status.code(), Some(1));
    assert!(run(d, &["--help"]).status.success());
}

#[test]
fn config_path_from_environment() {
    let dir = setup();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_diffmotion"))
        .current_dir(d)
        .env("DIFFMOTION_CONFIG", "cfg.json")
        .args(["datagen", "--out", "env.dmotion"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(read(d.join("env.dmotion")), read(d.join("data.dmotion")));
}

#[test]
fn train_outputs_are_reproducible() {
    let dir = setup();
    let d = dir.path();
    let a = train(d, "run_a", &[]);
    let b = train(d, "run_b", &[]);
    for f in ["checkpoint.dmckpt", "loss.csv", "config.json"] {
        assert_eq!(read(a.join(f)), read(b.join(f)), "{f} differs");
    }
    let loss = String::from_utf8(read(a.join("loss.csv"))).unwrap();
    assert_eq!(loss.lines().count(), 3);
    assert!(loss.starts_with("epoch,mean_loss,lr\n"));

    let missing = run(d, &["--config", "cfg.json", "train", "--data", "nope.dmotion", "--out-dir", "x"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn resume_continues_the_run_exactly() {
    let dir = setup();
    let d = dir.path();
    let straight = train(d, "straight", &["--epochs", "4"]);
    let first = train(d, "first", &["--epochs", "2", "--checkpoint-every", "1"]);
    assert!(first.join("checkpoint_epoch0001.dmckpt").exists());
    let resumed = train(d, "resumed", &["--epochs", "4", "--resume", "first/checkpoint.dmckpt"]);
    assert_eq!(read(straight.join("loss.csv")), read(resumed.join("loss.csv")));
    assert_eq!(read(straight.join("checkpoint.dmckpt")), read(resumed.join("checkpoint.dmckpt")));

    // Continuity in the trace itself: the first resumed epoch is no outlier.
    let text = String::from_utf8(read(resumed.join("loss.csv"))).unwrap();
    let losses: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let recent = &losses[..2];
    let mean = recent.iter().sum::<f64>() / 2.0;
    let std = (recent.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((losses[2] - losses[1]).abs() <= 10.0 * std.max(1e-12) || (losses[2] - losses[1]).abs() < 0.5 * mean);

    let changed = run(d, &["--config", "cfg.json", "train", "--data", "data.dmotion", "--out-dir", "bad", "--k", "1", "--resume", "first/checkpoint.dmckpt"]);
    assert_eq!(changed.status.code(), Some(1));
}

#[test]
fn sample_eval_plot_pipeline() {
    let dir = setup();
    let d = dir.path();
    train(d, "run", &[]);
    let sample = |out: &str, extra: &[&str]| {
        let mut args = vec!["--config", "cfg.json", "sample", "--checkpoint", "run/checkpoint.dmckpt", "--data", "data.dmotion", "--out", out];
        args.extend_from_slice(extra);
        ok(d, &args);
        PredictionSet::load(&d.join(out)).unwrap()
    };
    let p1 = sample("p1.dmotion", &[]);
    sample("p2.dmotion", &[]);
    assert_eq!(read(d.join("p1.dmotion")), read(d.join("p2.dmotion")));
    assert_eq!(read(d.join("p1.dmotion.meta.json")), read(d.join("p2.dmotion.meta.json")));
    assert_eq!(p1.histories.len(), 3);
    assert!(p1.samples.iter().all(|s| s.len() == 3));
    assert!(p1.meta.run_config.is_some());
    let single = sample("s1.dmotion", &["--samples", "1"]);
    assert!(single.samples.iter().all(|s| s.len() == 1));
    let other_seed = sample("p3.dmotion", &["--seed", "99"]);
    assert_ne!(other_seed.samples, p1.samples);

    // Checkpoint trained for a different generator is rejected.
    let mismatch = run(d, &["--config", "cfg.json", "--set", "generator.transformer.ff_dim=16", "sample", "--checkpoint", "run/checkpoint.dmckpt", "--data", "data.dmotion", "--out", "bad.dmotion"]);
    assert_eq!(mismatch.status.code(), Some(1));

    ok(d, &["--config", "cfg.json", "eval", "--predictions", "p1.dmotion", "--data", "data.dmotion", "--out", "m1.csv", "--jsonl", "m1.jsonl"]);
    ok(d, &["--config", "cfg.json", "eval", "--predictions", "p1.dmotion", "--data", "data.dmotion", "--out", "m2.csv"]);
    assert_eq!(read(d.join("m1.csv")), read(d.join("m2.csv")));
    let cfg = RunConfig::from_json(TINY).unwrap();
    let set = load_dataset(&cfg, &d.join("data.dmotion")).unwrap();
    let lib = evaluate_predictions(&cfg, &p1, &set).unwrap();
    assert_eq!(String::from_utf8(read(d.join("m1.csv"))).unwrap(), records_csv(&lib));
    let zero = lib.iter().find(|r| r.method == "zero_velocity").unwrap();
    assert_eq!(zero.aggregate.apd, 0.0);
    let jsonl = String::from_utf8(read(d.join("m1.jsonl"))).unwrap();
    assert!(jsonl.lines().next().unwrap().contains("run_config"));

    ok(d, &["--config", "cfg.json", "plot", "--out-dir", "fig_a", "--predictions", "p1.dmotion", "--loss", "run/loss.csv"]);
    ok(d, &["--config", "cfg.json", "plot", "--out-dir", "fig_b", "--predictions", "p1.dmotion", "--loss", "run/loss.csv"]);
    for f in ["schedules.svg", "predictions_h0.svg", "loss.svg"] {
        let a = read(d.join("fig_a").join(f));
        assert_eq!(a, read(d.join("fig_b").join(f)), "{f} differs");
        assert!(String::from_utf8(a).unwrap().starts_with("<svg"));
    }
}

#[test]
fn ground_truth_predictions_score_zero() {
    let dir = setup();
    let d = dir.path();
    let cfg = RunConfig::from_json(TINY).unwrap();
    let set = load_dataset(&cfg, &d.join("data.dmotion")).unwrap();
    let (_, test) = diffmotion::cli::split_pairs(&cfg, &set).unwrap();
    let preds = PredictionSet {
        meta: PredictionMeta {
            seed: 0,
            diffusion_steps: 5,
            schedule: ScheduleKind::CosineOffset1,
            checkpoint_id: "ground-truth".into(),
            samples_per_history: 1,
            history: 4,
            future: 4,
            joints: 3,
            sources: test.iter().map(|p| WindowSource { clip: p.clip, start: p.start }).collect(),
            run_config: None,
        },
        skeleton: set.skeleton.clone(),
        frame_rate: set.frame_rate,
        histories: test.iter().map(|p| p.x.clone()).collect(),
        samples: test.iter().map(|p| vec![p.y0.clone()]).collect(),
    };
    preds.save(&d.join("gt.dmotion")).unwrap();
    ok(d, &["--config", "cfg.json", "eval", "--predictions", "gt.dmotion", "--data", "data.dmotion", "--out", "gt.csv"]);
    let records = evaluate_predictions(&cfg, &preds, &set).unwrap();
    let model = &records[0].aggregate;
    assert_eq!(model.ade, 0.0);
    assert_eq!(model.fde, 0.0);
    // Test futures against training-future statistics: small, not exactly 0.
    assert!(model.cmd < 0.5, "cmd {}", model.cmd);

    // Skeleton mismatch is rejected.
    let mut wrong = preds.clone();
    wrong.skeleton = diffmotion::data::Skeleton::new(vec![None, Some(0), Some(0)]).unwrap();
    if wrong.skeleton != set.skeleton {
        wrong.save(&d.join("wrong.dmotion")).unwrap();
        let out = run(d, &["--config", "cfg.json", "eval", "--predictions", "wrong.dmotion", "--data", "data.dmotion"]);
        assert_ne!(out.status.code(), Some(0));
    }
}

#[test]
fn plot_rejects_empty_predictions_without_writing() {
    let dir = setup();
    let d = dir.path();
    let empty = diffmotion::data::MotionSet {
        skeleton: diffmotion::data::Skeleton::new(vec![None, Some(0), Some(1)]).unwrap(),
        frame_rate: 25.0,
        clips: vec![],
    };
    diffmotion::data::save_motion(&empty, &d.join("empty.dmotion")).unwrap();
    let meta = r#"{"seed":0,"diffusion_steps":5,"schedule":"cosine_offset1","checkpoint_id":"x","samples_per_history":1,"history":4,"future":4,"joints":3,"sources":[]}"#;
    std::fs::write(d.join("empty.dmotion.meta.json"), meta).unwrap();
    let out = run(d, &["--config", "cfg.json", "plot", "--out-dir", "figs", "--predictions", "empty.dmotion"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!d.join("figs").exists());

    ok(d, &["--config", "cfg.json", "plot", "--out-dir", "sched"]);
    let svg = String::from_utf8(read(d.join("sched/schedules.svg"))).unwrap();
    let offset1 = svg.split("data-series=\"cosine_offset1\" data-values=\"").nth(1).unwrap();
    assert!(offset1.starts_with("0.500000 "));
}
