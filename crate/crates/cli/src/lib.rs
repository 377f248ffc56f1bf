//! Subcommands of the `diqp` binary. The config file is the source of truth;
//! flags override individual fields.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use diqp::analysis::{artifact_report, choose_temporal_offset, temporal_diff_stats_multi};
use diqp::checkpoint;
use diqp::imageio::write_gray;
use diqp::pipeline::manifest::{read_frame_dir, write_frame_dir};
use diqp::pipeline::prepare::degrade_clip;
use diqp::pipeline::{prepare, ClipManifest, Codec, Dataset, DatasetIndex, Split};
use diqp::train::restore::{evaluate_clip, restore_clip, MetricsRow};
use diqp::train::trainer::{train_loop, write_loss_csv};
use diqp::{ClipTensor, DiqpError, DiqpModel, Result, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "diqp", version, about = "QP-conditioned restoration of codec-compressed video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Degrade every configured clip at every QP level and write the dataset index.
    Prepare(Common),
    /// Train a model on the prepared training split.
    Train(Common),
    /// Restore one degraded clip with a trained checkpoint.
    Restore(RestoreArgs),
    /// Score a checkpoint on the prepared evaluation split.
    Eval(EvalArgs),
    /// Frame-difference statistics against temporal offset for one clip.
    AnalyzeTemporal(TemporalArgs),
    /// Per-QP distortion statistics and heatmaps for one frame.
    AnalyzeArtifacts(ArtifactArgs),
    /// Print the merged configuration as TOML.
    InspectConfig(Common),
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Default, Clone)]
pub struct Common {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Random seed for initialisation and data sampling.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Codec: hevc, av1 or synthetic.
    #[arg(long, value_name = "NAME")]
    pub codec: Option<String>,
    /// Restrict the run to a single QP level.
    #[arg(long, value_name = "N")]
    pub qp: Option<u32>,
    /// Number of training steps.
    #[arg(long, value_name = "N")]
    pub steps: Option<usize>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint to load; defaults to `<out>/model.ckpt`.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Manifest of the degraded clip.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Manifest of the matching raw clip; adds a metrics sidecar.
    #[arg(long, value_name = "PATH")]
    pub raw: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint to load; defaults to `<out>/model.ckpt`.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TemporalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Manifest of the clip to analyse.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Anchor frames, comma separated; statistics are averaged over them.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub anchors: Option<Vec<usize>>,
    /// Largest temporal offset.
    #[arg(long, value_name = "N")]
    pub max_offset: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ArtifactArgs {
    #[command(flatten)]
    pub common: Common,
    /// Manifest of the raw clip.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Frame of the clip to degrade.
    #[arg(long, value_name = "N", default_value_t = 0)]
    pub frame: usize,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Prepare(c) | Command::Train(c) | Command::InspectConfig(c) => c,
            Command::Restore(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::AnalyzeTemporal(a) => &a.common,
            Command::AnalyzeArtifacts(a) => &a.common,
        }
    }
}

/// Load the config file (or defaults), apply flag overrides and validate.
pub fn load_config(flags: &Common) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(codec) = &flags.codec {
        cfg.pipeline.codec = codec.parse::<Codec>()?;
    }
    if let Some(qp) = flags.qp {
        cfg.pipeline.qp_levels = vec![qp];
    }
    if let Some(steps) = flags.steps {
        cfg.train.steps = steps;
    }
    if let Some(out) = &flags.out {
        cfg.paths.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DiqpError::io(dir, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DiqpError::format(path, e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| DiqpError::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| DiqpError::io(path, e))
}

fn load_manifest_clip(path: &Path) -> Result<(ClipManifest, ClipTensor)> {
    let m = ClipManifest::load(path)?;
    let clip = m.load_clip(path)?;
    Ok((m, clip))
}

fn load_model(cfg: &RunConfig, path: Option<&PathBuf>) -> Result<DiqpModel> {
    let path = path.cloned().unwrap_or_else(|| cfg.paths.out_dir.join("model.ckpt"));
    checkpoint::load(&path, Some(&cfg.model))
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli.command.common())?;
    match &cli.command {
        Command::Prepare(_) => cmd_prepare(&cfg),
        Command::Train(_) => cmd_train(&cfg),
        Command::Restore(a) => cmd_restore(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::AnalyzeTemporal(a) => cmd_analyze_temporal(&cfg, a),
        Command::AnalyzeArtifacts(a) => cmd_analyze_artifacts(&cfg, a),
        Command::InspectConfig(_) => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<()> {
    let r = prepare(cfg)?;
    println!(
        "{} index entries, {} clip/QP pairs degraded, {} reused -> {}",
        r.entries,
        r.encoded,
        r.reused,
        r.index_path.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let index = DatasetIndex::load(&DatasetIndex::path(&cfg.paths.data_dir))?;
    let qps: BTreeSet<u32> = cfg.qp_levels()?.into_iter().collect();
    let index = DatasetIndex {
        entries: index.entries.into_iter().filter(|e| qps.contains(&e.qp)).collect(),
        ..index
    };
    let dataset = Dataset::load(&index, Split::Train, &cfg.model)?;
    let out = &cfg.paths.out_dir;
    create_dir(out)?;
    let config_path = out.join("config.toml");
    fs::write(&config_path, cfg.to_toml()).map_err(|e| DiqpError::io(&config_path, e))?;
    let result = train_loop(&dataset, cfg, |step, model| {
        checkpoint::save(&out.join("checkpoints").join(format!("step_{step:06}.ckpt")), model)
    })?;
    checkpoint::save(&out.join("model.ckpt"), &result.model)?;
    write_loss_csv(&out.join("loss.csv"), &result.losses)?;
    if let Some(last) = result.losses.last() {
        println!("trained {} steps, final loss {:.6}", result.losses.len(), last.loss);
    }
    println!("checkpoint -> {}", out.join("model.ckpt").display());
    Ok(())
}

pub fn cmd_restore(cfg: &RunConfig, args: &RestoreArgs) -> Result<()> {
    let qp = args
        .common
        .qp
        .ok_or_else(|| DiqpError::Config("restore needs --qp, the QP the clip was encoded at".into()))?;
    let model = load_model(cfg, args.checkpoint.as_ref())?;
    let (manifest, degraded) = load_manifest_clip(&args.input)?;
    let restored = restore_clip(&model, &degraded, qp, &cfg.restore)?.clamped();
    let out = &cfg.paths.out_dir;
    write_frame_dir(out, &restored)?;
    if let Some(raw_path) = &args.raw {
        let (_, raw) = load_manifest_clip(raw_path)?;
        let rows = evaluate_clip(&model, &manifest.clip_id, &raw, &degraded, qp, &cfg.restore)?;
        write_csv(&out.join("metrics.csv"), &rows)?;
    }
    println!("restored {} frames -> {}", restored.frames(), out.display());
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let model = load_model(cfg, args.checkpoint.as_ref())?;
    let index = DatasetIndex::load(&DatasetIndex::path(&cfg.paths.data_dir))?;
    let qps: BTreeSet<u32> = cfg.qp_levels()?.into_iter().collect();
    // One evaluation per (clip, QP); each covers every segment of the clip.
    let mut seen = BTreeSet::new();
    let mut rows: Vec<MetricsRow> = Vec::new();
    for e in index.split(Split::Eval) {
        if !qps.contains(&e.qp) || !seen.insert((e.clip.clone(), e.qp)) {
            continue;
        }
        let (_, raw) = load_manifest_clip(&e.raw_manifest)?;
        let degraded = read_frame_dir(&e.degraded_dir, e.total_frames)?;
        rows.extend(evaluate_clip(&model, &e.clip, &raw, &degraded, e.qp, &cfg.restore)?);
    }
    if rows.is_empty() {
        return Err(DiqpError::Invalid("the index has no evaluation entries".into()));
    }
    create_dir(&cfg.paths.out_dir)?;
    let path = cfg.paths.out_dir.join("metrics.csv");
    write_csv(&path, &rows)?;
    let n = rows.len() as f64;
    let gain = rows.iter().map(|r| r.psnr_out - r.psnr_in).sum::<f64>() / n;
    println!("{} rows, mean PSNR gain {gain:+.4} dB -> {}", rows.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct TemporalRow {
    offset: usize,
    min: f64,
    max: f64,
    nonzero: f64,
    mean: f64,
}

pub fn cmd_analyze_temporal(cfg: &RunConfig, args: &TemporalArgs) -> Result<()> {
    let (_, clip) = load_manifest_clip(&args.input)?;
    let anchors = args.anchors.clone().unwrap_or_else(|| cfg.analysis.anchors.clone());
    let max_offset = args.max_offset.unwrap_or(cfg.analysis.max_offset);
    let stats = temporal_diff_stats_multi(&clip, &anchors, max_offset)?;
    let rows: Vec<TemporalRow> = (0..stats.offsets.len())
        .map(|i| TemporalRow {
            offset: stats.offsets[i],
            min: stats.min[i],
            max: stats.max[i],
            nonzero: stats.nonzero[i],
            mean: stats.mean[i],
        })
        .collect();
    create_dir(&cfg.paths.out_dir)?;
    let path = cfg.paths.out_dir.join("temporal.csv");
    write_csv(&path, &rows)?;
    if stats.mean.len() >= 3 {
        let knee = choose_temporal_offset(&stats, cfg.analysis.knee_fraction, cfg.analysis.knee_run)?;
        let note = if knee.found { "" } else { " (no plateau within range)" };
        println!("suggested look-ahead offset: {}{note}", knee.offset);
    }
    println!("{} offsets -> {}", rows.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct ArtifactRow {
    qp: u32,
    mad: f64,
    psnr: f64,
}

pub fn cmd_analyze_artifacts(cfg: &RunConfig, args: &ArtifactArgs) -> Result<()> {
    let (manifest, clip) = load_manifest_clip(&args.input)?;
    if args.frame >= clip.frames() {
        return Err(DiqpError::Invalid(format!(
            "frame {} is outside the {}-frame clip",
            args.frame,
            clip.frames()
        )));
    }
    let frame = clip.frame(args.frame);
    let single = ClipTensor::from_frames(std::slice::from_ref(&frame))?;
    let out = &cfg.paths.out_dir;
    create_dir(out)?;
    let mut rows = Vec::new();
    for qp in cfg.qp_levels()? {
        let degraded = degrade_clip(cfg, &single, qp, manifest.fps)?.frame(0);
        let r = artifact_report(&frame, &degraded, qp, cfg.analysis.heatmap_scale)?;
        write_gray(&out.join(format!("heatmap_qp{qp:03}.png")), r.height, r.width, &r.heatmap_u8())?;
        rows.push(ArtifactRow {
            qp,
            mad: r.mad,
            psnr: r.psnr,
        });
    }
    let path = out.join("artifacts.csv");
    write_csv(&path, &rows)?;
    println!("{} QP levels -> {}", rows.len(), path.display());
    Ok(())
}
