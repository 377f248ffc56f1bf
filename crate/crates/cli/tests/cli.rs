use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use diqp::clip::synthetic_clip;
use diqp::config::ModelConfig;
use diqp::pipeline::{ClipManifest, DatasetIndex, SyntheticQuantizer};
use diqp::{ClipTensor, RunConfig};
use diqp_tensor::Tensor;

fn diqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_diqp"))
        .args(args)
        .env_remove("DIQP_ENCODER")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_model() -> ModelConfig {
    let mut cfg = ModelConfig {
        stages: 2,
        base_channels: 4,
        heads: vec![1, 2],
        window: [3, 2, 2],
        blocks_per_stage: 1,
        window_side: 8,
        ..ModelConfig::default()
    };
    cfg.look_around.channels = vec![2, 3];
    cfg.look_ahead.channels = vec![2, 3];
    cfg.look_ahead.offset = 2;
    cfg.lost.frame_size = [16, 16];
    cfg.lost.max_frames = 12;
    cfg.lost.qp_max = 15;
    cfg.lost.embed_dim = 2;
    cfg.lost.hidden = 4;
    cfg.lost.base_side = 2;
    cfg
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    eval_clip: PathBuf,
}

impl Workspace {
    fn arg(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    fn cfg(&self) -> &str {
        Self::arg(&self.config)
    }

    fn out(&self, name: &str) -> String {
        self.root.join(name).to_str().unwrap().to_string()
    }
}

/// One 9-frame training clip and one 6-frame evaluation clip at 16x16,
/// synthetic codec with QPs 3 and 6.
fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let (train, _) = ClipManifest::write_clip(&root.join("raw/train0"), "train0", &synthetic_clip(9, 16, 16, 1), 24.0).unwrap();
    let (eval, _) = ClipManifest::write_clip(&root.join("raw/eval0"), "eval0", &synthetic_clip(6, 16, 16, 2), 24.0).unwrap();
    let mut cfg = RunConfig::default();
    cfg.model = tiny_model();
    cfg.seed = 5;
    cfg.train.steps = 20;
    cfg.pipeline.synthetic_qp_max = 6;
    cfg.pipeline.synthetic_strength = 2.0;
    cfg.pipeline.train_manifests = vec![train];
    cfg.pipeline.eval_manifests = vec![eval.clone()];
    cfg.paths.data_dir = root.join("data");
    cfg.paths.out_dir = root.join("run");
    let config = root.join("config.toml");
    std::fs::write(&config, cfg.to_toml()).unwrap();
    Workspace {
        _dir: dir,
        root,
        config,
        eval_clip: eval,
    }
}

#[test]
fn every_subcommand_documents_its_flags() {
    let common = ["--config", "--seed", "--codec", "--qp", "--steps", "--out"];
    let extra: &[(&str, &[&str])] = &[
        ("prepare", &[]),
        ("train", &[]),
        ("restore", &["--checkpoint", "--input", "--raw"]),
        ("eval", &["--checkpoint"]),
        ("analyze-temporal", &["--input", "--anchors", "--max-offset"]),
        ("analyze-artifacts", &["--input", "--frame"]),
        ("inspect-config", &[]),
    ];
    for (cmd, flags) in extra {
        let o = diqp(&[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        let help = String::from_utf8(o.stdout).unwrap();
        for f in common.iter().chain(flags.iter()) {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
    }
    assert_eq!(diqp(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn config_dump_roundtrips() {
    let ws = workspace();
    let first = diqp(&["inspect-config", "--config", ws.cfg(), "--seed", "99"]);
    assert!(first.status.success(), "{}", stderr(&first));
    let dumped = ws.root.join("dumped.toml");
    std::fs::write(&dumped, &first.stdout).unwrap();
    let second = diqp(&["inspect-config", "--config", dumped.to_str().unwrap()]);
    assert_eq!(first.stdout, second.stdout);
    assert!(String::from_utf8(first.stdout).unwrap().starts_with("seed = 99\n"));
}

#[test]
fn invalid_config_exits_1_before_work() {
    let ws = workspace();
    let bad = ws.root.join("bad.toml");
    std::fs::write(&bad, "[train]\nstepz = 3\n").unwrap();
    let o = diqp(&["train", "--config", bad.to_str().unwrap(), "--out", &ws.out("bad")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stepz"));
    assert!(!ws.root.join("bad").exists());
    let o = diqp(&["prepare", "--config", ws.cfg(), "--codec", "mpeg2"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn prepare_indexes_segments_per_qp_and_is_idempotent() {
    let ws = workspace();
    let o = diqp(&["prepare", "--config", ws.cfg()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let index_path = DatasetIndex::path(&ws.root.join("data"));
    let index = DatasetIndex::load(&index_path).unwrap();
    // 3 training segments x 2 QPs, plus 2 evaluation segments x 2 QPs.
    assert_eq!(index.split(diqp::pipeline::Split::Train).count(), 6);
    assert_eq!(index.entries.len(), 10);
    let before = std::fs::read(&index_path).unwrap();
    let o = diqp(&["prepare", "--config", ws.cfg()]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 clip/QP pairs degraded, 4 reused"));
    assert_eq!(std::fs::read(&index_path).unwrap(), before);
}

#[test]
fn missing_encoder_exits_2_with_diagnostics() {
    let ws = workspace();
    let mut cfg = RunConfig::load(&ws.config).unwrap();
    cfg.model.lost.qp_max = 51;
    std::fs::write(&ws.config, cfg.to_toml()).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_diqp"))
        .args(["prepare", "--config", ws.cfg(), "--codec", "hevc", "--qp", "27"])
        .env("DIQP_ENCODER", "/nonexistent/diqp-encoder")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("diqp-encoder"), "{}", stderr(&o));
}

fn train(ws: &Workspace, out: &str, extra: &[&str]) -> Output {
    let out = ws.out(out);
    let mut args = vec!["train", "--config", ws.cfg(), "--out", &out];
    args.extend_from_slice(extra);
    diqp(&args)
}

#[test]
fn training_writes_checkpoint_and_reproducible_loss_curve() {
    let ws = workspace();
    assert!(diqp(&["prepare", "--config", ws.cfg()]).status.success());
    let a = train(&ws, "a", &["--steps", "200"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert!(ws.root.join("a/model.ckpt").is_file());
    let csv = std::fs::read_to_string(ws.root.join("a/loss.csv")).unwrap();
    assert!(csv.starts_with("step,lr,loss\n"));
    assert_eq!(csv.lines().count(), 201);
    assert!(train(&ws, "b", &["--steps", "200"]).status.success());
    assert_eq!(std::fs::read(ws.root.join("b/loss.csv")).unwrap(), csv.as_bytes());
    assert_eq!(
        std::fs::read(ws.root.join("a/model.ckpt")).unwrap(),
        std::fs::read(ws.root.join("b/model.ckpt")).unwrap()
    );
    assert!(train(&ws, "c", &["--steps", "200", "--seed", "6"]).status.success());
    assert_ne!(std::fs::read(ws.root.join("c/loss.csv")).unwrap(), csv.as_bytes());
}

#[test]
fn training_without_a_prepared_dataset_exits_2() {
    let ws = workspace();
    assert_eq!(train(&ws, "a", &[]).status.code(), Some(2));
}

fn degraded_manifest(ws: &Workspace, qp: u32) -> PathBuf {
    let m = ClipManifest::load(&ws.eval_clip).unwrap();
    let raw = m.load_clip(&ws.eval_clip).unwrap();
    let deg = SyntheticQuantizer::new(2.0).degrade(&raw, qp).unwrap();
    ClipManifest::write_clip(&ws.root.join(format!("deg{qp}")), "eval0", &deg, 24.0).unwrap().0
}

fn frame_bytes(dir: &Path, n: usize) -> Vec<Vec<u8>> {
    (0..n)
        .map(|t| std::fs::read(dir.join(diqp::pipeline::manifest::frame_name(t))).unwrap())
        .collect()
}

#[test]
fn zero_step_checkpoint_restores_byte_identically() {
    let ws = workspace();
    assert!(diqp(&["prepare", "--config", ws.cfg()]).status.success());
    assert!(train(&ws, "init", &["--steps", "0"]).status.success());
    let deg = degraded_manifest(&ws, 6);
    let ckpt = ws.out("init/model.ckpt");
    let out = ws.out("restored");
    let args = [
        "restore", "--config", ws.cfg(), "--checkpoint", &ckpt, "--input", deg.to_str().unwrap(), "--raw",
        ws.eval_clip.to_str().unwrap(), "--qp", "6", "--out", &out,
    ];
    let o = diqp(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let restored = ClipTensor::from_frames(
        &(0..6)
            .map(|t| diqp::imageio::read_rgb(&ws.root.join("restored").join(diqp::pipeline::manifest::frame_name(t))).unwrap())
            .collect::<Vec<Tensor>>(),
    )
    .unwrap();
    let degraded = ClipManifest::load(&deg).unwrap().load_clip(&deg).unwrap();
    assert_eq!(restored, degraded);
    let metrics = std::fs::read_to_string(ws.root.join("restored/metrics.csv")).unwrap();
    assert!(metrics.starts_with("clip,segment,qp,psnr_in,psnr_out,ssim_in,ssim_out\n"));
    assert_eq!(metrics.lines().count(), 3);

    // Eval on the identity restorer.
    let eval_out = ws.out("eval");
    let o = diqp(&["eval", "--config", ws.cfg(), "--checkpoint", &ckpt, "--out", &eval_out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(ws.root.join("eval/metrics.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[3], r[4]);
        assert_eq!(r[5], r[6]);
    }
}

#[test]
fn restore_is_deterministic_for_a_trained_checkpoint() {
    let ws = workspace();
    assert!(diqp(&["prepare", "--config", ws.cfg()]).status.success());
    assert!(train(&ws, "t", &["--steps", "10"]).status.success());
    let deg = degraded_manifest(&ws, 3);
    let ckpt = ws.out("t/model.ckpt");
    let run = |name: &str| {
        let out = ws.out(name);
        let o = diqp(&["restore", "--config", ws.cfg(), "--checkpoint", &ckpt, "--input", deg.to_str().unwrap(), "--qp", "3", "--out", &out]);
        assert!(o.status.success(), "{}", stderr(&o));
        frame_bytes(&ws.root.join(name), 6)
    };
    assert_eq!(run("r1"), run("r2"));
}

#[test]
fn restore_errors_map_to_exit_codes() {
    let ws = workspace();
    let deg = degraded_manifest(&ws, 3);
    let input = deg.to_str().unwrap();
    let o = diqp(&["restore", "--config", ws.cfg(), "--checkpoint", "/nonexistent.ckpt", "--input", input, "--qp", "3"]);
    assert_eq!(o.status.code(), Some(2));

    assert!(diqp(&["prepare", "--config", ws.cfg()]).status.success());
    assert!(train(&ws, "t", &["--steps", "0"]).status.success());
    let ckpt = ws.out("t/model.ckpt");
    // The default model config does not match the tiny checkpoint.
    let o = diqp(&["restore", "--checkpoint", &ckpt, "--input", input, "--qp", "3", "--out", &ws.out("x")]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("base_channels") && err.contains("window_side"), "{err}");
    let o = diqp(&["restore", "--config", ws.cfg(), "--checkpoint", &ckpt, "--input", input]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_temporal_reports_the_drift() {
    let ws = workspace();
    // Every pixel brightens by 2 code values per frame, exactly representable in 8 bits.
    let clip = ClipTensor::new(Tensor::from_fn(&[30, 8, 8, 3], |i| {
        let (t, p) = (i / 192, i % 192);
        (10 + p % 50 + 2 * t) as f64 / 255.0
    }))
    .unwrap();
    let (manifest, _) = ClipManifest::write_clip(&ws.root.join("drift"), "drift", &clip, 24.0).unwrap();
    let out = ws.out("temporal");
    let o = diqp(&[
        "analyze-temporal", "--input", manifest.to_str().unwrap(), "--anchors", "0,3", "--max-offset", "20", "--out", &out,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(ws.root.join("temporal/temporal.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["offset", "min", "max", "nonzero", "mean"]);
    let mut n = 0;
    for r in rdr.records() {
        let r = r.unwrap();
        let t: f64 = r[0].parse().unwrap();
        let mean: f64 = r[4].parse().unwrap();
        assert!((mean - t * 2.0 / 255.0).abs() < 1e-12, "offset {t}: {mean}");
        n += 1;
    }
    assert_eq!(n, 20);
    let o = diqp(&["analyze-temporal", "--input", manifest.to_str().unwrap(), "--max-offset", "40", "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_artifacts_mad_rises_with_qp() {
    let ws = workspace();
    let mut cfg = RunConfig::load(&ws.config).unwrap();
    cfg.pipeline.synthetic_qp_max = 12;
    std::fs::write(&ws.config, cfg.to_toml()).unwrap();
    let out = ws.out("artifacts");
    let o = diqp(&["analyze-artifacts", "--config", ws.cfg(), "--input", ws.eval_clip.to_str().unwrap(), "--out", &out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(ws.root.join("artifacts/artifacts.csv")).unwrap();
    let rows: Vec<(u32, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![3, 6, 9, 12]);
    assert!(rows.windows(2).all(|w| w[1].1 > w[0].1), "{rows:?}");
    for qp in [3, 6, 9, 12] {
        assert!(ws.root.join(format!("artifacts/heatmap_qp{qp:03}.png")).is_file());
    }
}
