//! `dynsync` command-line interface.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dynsync::eval::{column_total_variation, evaluate, offset_mae_seconds, render_view, spatiotemporal_image};
use dynsync::field::{checkpoint, gauge_fix};
use dynsync::optim::{optimize_test_offset, train, TrainConfig};
use dynsync::scene::{dataset, synthesize};
use dynsync::{Error, Exec, FieldModel, ModelKind, RunConfig};

#[derive(Parser)]
#[command(name = "dynsync", version, about = "Dynamic radiance fields with learned per-camera time offsets")]
struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic unsynchronized multi-view dataset.
    Synth(SynthArgs),
    /// Fit a field and per-camera offsets to a dataset.
    Train(TrainArgs),
    /// Score a checkpoint on the dataset's test views.
    Eval(EvalArgs),
    /// Print learned offsets and their error against ground truth.
    Sync(SyncArgs),
    /// Render one frame of one camera.
    Render(RenderArgs),
    /// Render a pixel column over every frame time.
    StImage(StArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> anyhow::Result<RunConfig> {
        Ok(match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    sigma_frames: Option<f64>,
    #[arg(long)]
    unsync_scale: Option<f64>,
    /// Seed of the offset draw.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scene_seed: Option<u64>,
    #[arg(long)]
    cameras: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    model: Option<ModelKind>,
    /// Keep every offset at zero.
    #[arg(long)]
    no_offsets: bool,
    #[arg(long)]
    offset_lr_ratio: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
    /// Fit each test camera's offset before scoring.
    #[arg(long)]
    optimize_test_offset: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SyncArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset with ground-truth offsets to compare against.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    camera: usize,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    /// Extra query-time shift in frames.
    #[arg(long, default_value_t = 0.0)]
    offset_frames: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Args)]
struct StArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    camera: usize,
    #[arg(long)]
    column: usize,
    #[arg(long, default_value_t = 0.0)]
    offset_frames: f64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

/// Exit code for a failure: 1 usage, 2 data, 3 numerical.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_numerical() => 3,
        Some(Error::Config(_) | Error::InvalidArgument(_) | Error::CameraOutOfRange { .. }) => 1,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let exec = Exec::with_threads(cli.threads);
    match cli.command {
        Command::Synth(a) => synth(a, &exec),
        Command::Train(a) => train_cmd(a, &exec),
        Command::Eval(a) => eval_cmd(a, &exec),
        Command::Sync(a) => sync_cmd(a),
        Command::Render(a) => render_cmd(a, &exec),
        Command::StImage(a) => st_cmd(a, &exec),
    }
}

/// Refuse to write into a non-empty directory unless forced.
fn prepare_out_dir(dir: &Path, force: bool) -> anyhow::Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() && !force {
        return Err(Error::InvalidArgument(format!("{} is not empty; pass --force to overwrite", dir.display())).into());
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

fn synth(a: SynthArgs, exec: &Exec) -> anyhow::Result<()> {
    let mut cfg = a.config.load()?;
    if let Some(v) = a.sigma_frames {
        cfg.data.sigma_frames = v;
    }
    if let Some(v) = a.unsync_scale {
        cfg.data.unsync_scale = v;
    }
    if let Some(v) = a.seed {
        cfg.data.offset_seed = v;
    }
    if let Some(v) = a.scene_seed {
        cfg.scene.seed = v;
    }
    if let Some(v) = a.cameras {
        cfg.rig.n_cameras = v;
    }
    if let Some(v) = a.frames {
        cfg.data.n_frames = v;
    }
    prepare_out_dir(&a.out, a.force)?;
    let video = synthesize(&cfg.scene, &cfg.rig, &cfg.data, exec)?;
    dataset::write_dataset(&video, &a.out)?;
    fs::write(a.out.join("config.toml"), cfg.to_toml_string()?)?;
    println!(
        "wrote {} cameras x {} frames to {}",
        video.cameras.len(),
        video.n_frames,
        a.out.display()
    );
    Ok(())
}

fn train_config(a: &TrainArgs, cfg: &mut RunConfig) -> TrainConfig {
    if let Some(k) = a.model {
        cfg.model.kind = k;
    }
    if a.no_offsets {
        cfg.train.learn_offsets = false;
    }
    if let Some(v) = a.offset_lr_ratio {
        cfg.train.lr_offset_ratio = Some(v);
    }
    if let Some(v) = a.iterations {
        cfg.train.iterations = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    cfg.train_config()
}

fn train_cmd(a: TrainArgs, exec: &Exec) -> anyhow::Result<()> {
    let mut cfg = a.config.load()?;
    let tc = train_config(&a, &mut cfg);
    tc.validate()?;
    let video = dataset::read_dataset(&a.data)?;
    prepare_out_dir(&a.out, a.force)?;
    fs::write(a.out.join("config.toml"), cfg.to_toml_string()?)?;
    let mut log = fs::File::create(a.out.join("metrics.jsonl"))?;
    let mut log_err = None;
    let out = train(&video, &tc, exec, |rec| {
        let line = serde_json::to_string(rec).expect("record serializes");
        if let Err(e) = writeln!(log, "{line}") {
            log_err.get_or_insert(e);
        }
        eprintln!("iter {:>6}  loss {:.5}  psnr {:.2}", rec.iter, rec.loss, rec.psnr_train);
    })?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let step = out.model.time_map.step();
    fs::write(a.out.join("offsets.csv"), out.history.to_csv(1.0 / step))?;
    checkpoint::save(&out.model, &a.out.join("model.synf"))?;
    println!("checkpoint {}", a.out.join("model.synf").display());
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<FieldModel> {
    checkpoint::load(path).with_context(|| format!("loading {}", path.display()))
}

fn eval_cmd(a: EvalArgs, exec: &Exec) -> anyhow::Result<()> {
    let cfg = a.config.load()?;
    let video = dataset::read_dataset(&a.data)?;
    let model = load_model(&a.checkpoint)?;
    let mut deltas = Vec::new();
    if a.optimize_test_offset {
        for cam in video.test_indices() {
            let cal = optimize_test_offset(&model, &video, cam, &cfg.calibration, &cfg.eval, exec)?;
            deltas.push(cal.delta);
        }
    }
    let report = evaluate(&model, &video, &deltas, &cfg.eval, &cfg.fingerprint(), exec)?;
    let json = report.to_json()?;
    match a.out {
        Some(p) => fs::write(p, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn sync_cmd(a: SyncArgs) -> anyhow::Result<()> {
    let model = load_model(&a.checkpoint)?;
    let tm = model.time_map;
    let frames: Vec<f64> = model.offsets.deltas.iter().map(|&d| tm.offset_to_frames(d)).collect();
    let fixed = gauge_fix(&frames);
    println!("camera  offset_frames  offset_seconds");
    for (k, f) in fixed.iter().enumerate() {
        println!("{k:>6}  {f:>13.3}  {:>14.5}", tm.frames_to_seconds(*f));
    }
    if let Some(dir) = a.data {
        let video = dataset::read_dataset(&dir)?;
        let gt = video.offsets_gt.as_ref().ok_or(Error::MissingGroundTruth)?;
        let gt: Vec<f64> = video.train_indices().iter().map(|&i| gt[i]).collect();
        let mae = offset_mae_seconds(&model.offsets.deltas, Some(&gt), &tm)?;
        println!("mae {:.5} s ({:.3} frames)", mae, mae * tm.fps);
    }
    Ok(())
}

fn camera_of(video: &dynsync::scene::VideoSet, id: usize) -> anyhow::Result<usize> {
    match video.cameras.iter().position(|c| c.id == id) {
        Some(i) => Ok(i),
        None => bail!(Error::CameraOutOfRange {
            index: id,
            count: video.cameras.len()
        }),
    }
}

/// Offset applied to camera `cam`: its learned one for training cameras.
fn camera_delta(model: &FieldModel, video: &dynsync::scene::VideoSet, cam: usize, extra_frames: f64) -> f64 {
    let learned = video
        .train_indices()
        .iter()
        .position(|&i| i == cam)
        .map_or(0.0, |k| model.offsets.deltas[k]);
    learned + model.time_map.frames_to_offset(extra_frames)
}

fn render_cmd(a: RenderArgs, exec: &Exec) -> anyhow::Result<()> {
    let cfg = a.config.load()?;
    let video = dataset::read_dataset(&a.data)?;
    let model = load_model(&a.checkpoint)?;
    let cam = camera_of(&video, a.camera)?;
    if a.frame >= video.n_frames {
        bail!(Error::InvalidArgument(format!("frame {} out of range", a.frame)));
    }
    let delta = camera_delta(&model, &video, cam, a.offset_frames);
    let img = render_view(&model, &video.cameras[cam], &[a.frame], delta, &cfg.eval, exec)?;
    img[0].to_rgb8().save(&a.out)?;
    Ok(())
}

fn st_cmd(a: StArgs, exec: &Exec) -> anyhow::Result<()> {
    let cfg = a.config.load()?;
    let video = dataset::read_dataset(&a.data)?;
    let model = load_model(&a.checkpoint)?;
    let cam = camera_of(&video, a.camera)?;
    let delta = camera_delta(&model, &video, cam, a.offset_frames);
    let img = spatiotemporal_image(&model, &video.cameras[cam], a.column, delta, &cfg.eval.settings(), exec)?;
    img.to_rgb8().save(&a.out)?;
    println!("column variation {:.5}", column_total_variation(&img));
    Ok(())
}
