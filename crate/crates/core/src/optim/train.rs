use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, Adam, AdamConfig, Moments};
use super::sampler::{PixelSampler, SamplerKind};
use crate::error::{Error, Result};
use crate::field::{FieldModel, FieldRepr, ModelConfig, ModelKind, TemporalLatentField};
use crate::par::Exec;
use crate::params::Grads;
use crate::render::{generate_ray, pixel_rng, render_ray_on_tape, sample_along_ray, Ray, Rgb, WHITE};
use crate::scene::{CameraModel, VideoSet};
use crate::tape::Tape;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    #[default]
    Cosine,
}

/// Training hyper-parameters. `model` is carried alongside but configured
/// through its own section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    #[serde(skip)]
    pub model: ModelConfig,
    pub iterations: usize,
    pub batch_rays: usize,
    /// Rays per gradient partial; fixes the reduction order.
    pub chunk_rays: usize,
    pub n_samples: usize,
    /// Base learning rate; the model family picks one when unset.
    pub lr_field: Option<f64>,
    /// Offset rate relative to the base rate; family preset when unset.
    pub lr_offset_ratio: Option<f64>,
    /// Rate of the temporal MLP relative to the base rate; family preset when unset.
    pub lr_temporal_ratio: Option<f64>,
    pub offset_warmup_iters: usize,
    /// Fraction of the run over which the time encoding of latent fields
    /// widens from coarse to full; family preset when unset.
    pub freq_anneal_fraction: Option<f64>,
    pub learn_offsets: bool,
    pub lr_schedule: LrSchedule,
    pub lr_min_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub variance_eps: f64,
    pub time_smoothness: f64,
    pub eval_every: usize,
    pub background: Rgb,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            iterations: 800,
            batch_rays: 512,
            chunk_rays: 128,
            n_samples: 32,
            lr_field: None,
            lr_offset_ratio: None,
            lr_temporal_ratio: None,
            offset_warmup_iters: 100,
            freq_anneal_fraction: None,
            learn_offsets: true,
            lr_schedule: LrSchedule::Cosine,
            lr_min_ratio: 0.1,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
            seed: 0,
            sampler: SamplerKind::TemporalVariance,
            variance_eps: 0.02,
            time_smoothness: 0.0,
            eval_every: 100,
            background: WHITE,
        }
    }
}

impl TrainConfig {
    /// Offset learning rate at half the field rate.
    pub const OFFSET_RATIO_HIGH: f64 = 0.5;
    /// Offset learning rate at a tenth of the field rate.
    pub const OFFSET_RATIO_LOW: f64 = 0.1;

    pub fn base_lr(&self) -> f64 {
        self.lr_field.unwrap_or(match self.model.kind {
            ModelKind::PlaneExplicit | ModelKind::PlaneHybrid => 0.02,
            ModelKind::Latent => 0.01,
        })
    }

    pub fn offset_ratio(&self) -> f64 {
        self.lr_offset_ratio.unwrap_or(match self.model.kind {
            ModelKind::PlaneExplicit | ModelKind::PlaneHybrid => Self::OFFSET_RATIO_LOW,
            ModelKind::Latent => Self::OFFSET_RATIO_HIGH,
        })
    }

    pub fn temporal_ratio(&self) -> f64 {
        self.lr_temporal_ratio.unwrap_or(match self.model.kind {
            ModelKind::PlaneExplicit | ModelKind::PlaneHybrid => 1.0,
            ModelKind::Latent => 5.0,
        })
    }

    pub fn freq_anneal(&self) -> f64 {
        self.freq_anneal_fraction.unwrap_or(match self.model.kind {
            ModelKind::PlaneExplicit | ModelKind::PlaneHybrid => 0.0,
            ModelKind::Latent => 0.5,
        })
    }

    /// Encoding window at iteration `iter`; `None` once fully open.
    pub fn frequency_window(&self, iter: usize) -> Option<f64> {
        let span = self.freq_anneal() * self.iterations as f64;
        let p = iter as f64 / span;
        (span > 0.0 && p < 1.0).then_some(p * self.model.n_freqs as f64)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Multiplier on the base rate at iteration `iter`.
    pub fn lr_factor(&self, iter: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                let p = iter as f64 / self.iterations.max(1) as f64;
                self.lr_min_ratio + (1.0 - self.lr_min_ratio) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations == 0 || self.batch_rays == 0 || self.chunk_rays == 0 {
            return bad("iterations, batch_rays and chunk_rays must be positive");
        }
        if self.n_samples < 2 {
            return bad("n_samples must be at least 2");
        }
        if self.offset_warmup_iters >= self.iterations {
            return bad("offset_warmup_iters must be less than iterations");
        }
        if !(self.base_lr() > 0.0) || !(self.offset_ratio() >= 0.0) || !(self.temporal_ratio() > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive");
        }
        if !(0.0..=1.0).contains(&self.lr_min_ratio) {
            return bad("lr_min_ratio must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.freq_anneal()) {
            return bad("freq_anneal_fraction must lie in [0, 1]");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        Ok(())
    }
}

/// One supervised ray: which offset shifts it, where it goes, when, and
/// what color it should produce.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayRecord {
    /// Index into the offset table, or `None` for an unshifted query.
    pub slot: Option<usize>,
    pub ray: Option<Ray>,
    pub t: f64,
    pub target: Rgb,
    /// RNG stream for this ray's jitter.
    pub stream: u64,
}

/// Sample placement for [`rgb_loss`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSettings {
    pub n_samples: usize,
    pub jitter: bool,
    pub background: Rgb,
    pub seed: u64,
    pub iter: u64,
}

/// Sum over rays of the squared color error. Adds `scale ×` its gradient
/// into `grads` when one is given.
pub fn rgb_loss_sum(
    model: &FieldModel,
    offsets: &[f64],
    batch: &[RayRecord],
    settings: &LossSettings,
    scale: f64,
    tape: &mut Tape,
    mut grads: Option<&mut Grads>,
) -> Result<f64> {
    let mut total = 0.0;
    for rec in batch {
        let Some(ray) = rec.ray else {
            total += rec
                .target
                .iter()
                .zip(&settings.background)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            continue;
        };
        tape.clear();
        let t0 = tape.constant(&[rec.t]);
        let t = match rec.slot {
            Some(k) => {
                if k >= offsets.len() {
                    return Err(Error::CameraOutOfRange {
                        index: k,
                        count: offsets.len(),
                    });
                }
                let d = tape.offset(offsets, k);
                tape.add(t0, d)
            }
            None => t0,
        };
        let mut rng = pixel_rng(settings.seed, settings.iter, rec.stream);
        let samples = sample_along_ray(&ray, settings.n_samples, settings.jitter, &mut rng);
        let rgb = render_ray_on_tape(model, tape, &ray, &samples, t, settings.background);
        let l = tape.squared_error(rgb, &rec.target);
        total += tape.scalar_value(l);
        if let Some(g) = grads.as_deref_mut() {
            tape.backward(l, scale, &model.params, g);
        }
    }
    Ok(total)
}

/// Mean squared color error per ray over `batch`, using the model's own
/// offsets.
pub fn rgb_loss(model: &FieldModel, batch: &[RayRecord], settings: &LossSettings) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut tape = Tape::inference();
    let sum = rgb_loss_sum(model, &model.offsets.deltas, batch, settings, 0.0, &mut tape, None)?;
    Ok(sum / batch.len() as f64)
}

/// Per-iteration snapshot of the raw offsets, in normalized time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OffsetHistory {
    pub iterations: Vec<usize>,
    pub deltas: Vec<Vec<f64>>,
}

impl OffsetHistory {
    pub fn push(&mut self, iter: usize, deltas: &[f64]) {
        self.iterations.push(iter);
        self.deltas.push(deltas.to_vec());
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }

    /// CSV with a header `iter,cam_0,…`; values in frames when a step is given.
    pub fn to_csv(&self, frames_per_unit: f64) -> String {
        let k = self.deltas.first().map_or(0, Vec::len);
        let mut out = String::from("iter");
        for i in 0..k {
            out.push_str(&format!(",cam_{i}"));
        }
        out.push('\n');
        for (it, d) in self.iterations.iter().zip(&self.deltas) {
            out.push_str(&it.to_string());
            for v in d {
                out.push_str(&format!(",{}", v * frames_per_unit));
            }
            out.push('\n');
        }
        out
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iter: usize,
    pub loss: f64,
    pub psnr_train: f64,
    pub deltas_frames: Vec<f64>,
}

pub struct TrainOutput {
    pub model: FieldModel,
    pub history: OffsetHistory,
    pub metrics: Vec<MetricsRecord>,
}

/// Pixel-center rays and frames of the training cameras.
struct TrainView<'a> {
    rays: Vec<Option<Ray>>,
    frames: &'a [RgbImage],
    sampler: PixelSampler,
}

fn pixel_rays(camera: &CameraModel, model: &FieldModel) -> Vec<Option<Ray>> {
    let mut rays = Vec::with_capacity(camera.width * camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            rays.push(generate_ray(camera, [x as f64 + 0.5, y as f64 + 0.5], &model.bounds));
        }
    }
    rays
}

fn target_rgb(img: &RgbImage, pixel: usize, width: usize) -> Rgb {
    let p = img.get_pixel((pixel % width) as u32, (pixel / width) as u32);
    [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
}

/// Draw `n` supervised rays from a set of views; `slot` of view `v` is `v`.
fn draw_batch<R: Rng>(views: &[TrainView], model: &FieldModel, width: usize, n: usize, rng: &mut R) -> Vec<RayRecord> {
    (0..n)
        .map(|i| {
            let v = rng.random_range(0..views.len());
            let view = &views[v];
            let f = rng.random_range(0..view.frames.len());
            let pixel = view.sampler.sample(rng);
            RayRecord {
                slot: Some(v),
                ray: view.rays[pixel],
                t: model.time_map.frame_to_time(f as f64),
                target: target_rgb(&view.frames[f], pixel, width),
                stream: i as u64,
            }
        })
        .collect()
}

/// Gradient partial of one ray chunk.
struct Partial {
    grads: Grads,
    tape: Tape,
    loss: Result<f64>,
}

/// Jointly fit the field and one time offset per training camera.
///
/// Gradients are accumulated per fixed-size chunk of rays and summed in chunk
/// order, so the result does not depend on the worker count.
pub fn train(
    video: &VideoSet,
    config: &TrainConfig,
    exec: &Exec,
    mut observer: impl FnMut(&MetricsRecord),
) -> Result<TrainOutput> {
    config.validate()?;
    video.validate()?;
    let train_idx = video.train_indices();
    if train_idx.is_empty() {
        return Err(Error::InvalidArgument("no training cameras".into()));
    }
    let mut model = FieldModel::new(config.model.clone(), video.bounds, video.time_map(), train_idx.len())?;
    model.offsets.frozen = !config.learn_offsets;
    let views = train_idx
        .iter()
        .map(|&c| {
            Ok(TrainView {
                rays: pixel_rays(&video.cameras[c], &model),
                frames: &video.frames[c],
                sampler: PixelSampler::new(config.sampler, video, c, config.variance_eps)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_off = train_idx.len();
    let mut adam = Adam::new(&model.params, config.adam());
    let mut off_state = Moments::zeros(n_off);
    let mut off_steps = 0u64;
    let n_chunks = config.batch_rays.div_ceil(config.chunk_rays);
    let mut partials: Vec<Partial> = (0..n_chunks)
        .map(|_| Partial {
            grads: Grads::zeros_like(&model.params, n_off),
            tape: Tape::new(),
            loss: Ok(0.0),
        })
        .collect();
    let mut total = Grads::zeros_like(&model.params, n_off);
    let mut history = OffsetHistory::default();
    let mut metrics = Vec::new();
    let step = model.time_map.step();
    let scale = 1.0 / config.batch_rays as f64;

    for iter in 0..config.iterations {
        let mut rng = pixel_rng(config.seed, iter as u64, u64::MAX);
        let batch = draw_batch(&views, &model, video.width, config.batch_rays, &mut rng);
        let chunks: Vec<&[RayRecord]> = batch.chunks(config.chunk_rays).collect();
        let settings = LossSettings {
            n_samples: config.n_samples,
            jitter: true,
            background: config.background,
            seed: config.seed,
            iter: iter as u64,
        };
        let offsets = model.offsets.deltas.clone();
        model.set_frequency_window(config.frequency_window(iter));
        let m = &model;
        exec.for_each_zip(&chunks, &mut partials, |chunk, part| {
            part.grads.zero();
            part.loss = rgb_loss_sum(m, &offsets, chunk, &settings, scale, &mut part.tape, Some(&mut part.grads));
        });
        total.zero();
        let mut loss = 0.0;
        for part in &mut partials {
            total.accumulate(&part.grads);
            loss += std::mem::replace(&mut part.loss, Ok(0.0))?;
        }
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration: iter,
                reason: "non-finite loss".into(),
                norms: model.params.norms_summary(),
            });
        }
        if config.time_smoothness > 0.0 {
            if let FieldRepr::Planes(p) = &model.repr {
                p.time_smoothness_grad(&model.params, config.time_smoothness, &mut total);
            }
        }
        let lr = config.base_lr() * config.lr_factor(iter);
        let temporal = config.temporal_ratio();
        adam.step_scaled(&mut model.params, &total, lr, |name| {
            if TemporalLatentField::is_temporal(name) {
                temporal
            } else {
                1.0
            }
        })?;
        if config.learn_offsets && iter >= config.offset_warmup_iters {
            off_steps += 1;
            adam_step(
                "time_offsets",
                &mut model.offsets.deltas,
                &total.offsets,
                &mut off_state,
                off_steps,
                lr * config.offset_ratio(),
                &config.adam(),
            )?;
        }
        history.push(iter, &model.offsets.deltas);
        if (iter + 1) % config.eval_every == 0 || iter + 1 == config.iterations {
            let rec = MetricsRecord {
                iter,
                loss,
                psnr_train: 10.0 * (3.0 / loss).log10(),
                deltas_frames: model.offsets.deltas.iter().map(|d| d / step).collect(),
            };
            observer(&rec);
            metrics.push(rec);
        }
    }
    model.set_frequency_window(None);
    model.params.check_finite().map_err(|e| Error::Diverged {
        iteration: config.iterations,
        reason: e.to_string(),
        norms: model.params.norms_summary(),
    })?;
    model.quantize();
    Ok(TrainOutput {
        model,
        history,
        metrics,
    })
}
