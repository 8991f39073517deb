use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, Moments};
use super::sampler::{PixelSampler, SamplerKind};
use super::train::{rgb_loss_sum, LossSettings, RayRecord};
use crate::error::{Error, Result};
use crate::eval::{view_mse, EvalConfig};
use crate::field::FieldModel;
use crate::par::Exec;
use crate::params::Grads;
use crate::render::{generate_ray, pixel_rng};
use crate::scene::VideoSet;
use crate::tape::Tape;

/// Settings for fitting one held-out camera's time offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub iterations: usize,
    pub batch_rays: usize,
    pub chunk_rays: usize,
    pub n_samples: usize,
    pub lr: f64,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub variance_eps: f64,
    pub validation_rays: usize,
    pub check_every: usize,
    /// Abort when validation loss exceeds this multiple of its start value.
    pub divergence_factor: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            batch_rays: 256,
            chunk_rays: 128,
            n_samples: 32,
            lr: 0.004,
            seed: 0,
            sampler: SamplerKind::TemporalVariance,
            variance_eps: 0.02,
            validation_rays: 512,
            check_every: 50,
            divergence_factor: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Offset to use: the optimized value, or zero if that scored worse.
    pub delta: f64,
    pub optimized_delta: f64,
    pub mse_zero: f64,
    pub mse_optimized: f64,
    pub history: Vec<f64>,
}

impl Calibration {
    pub fn accepted(&self) -> bool {
        self.delta == self.optimized_delta
    }
}

/// Fit `δ` for camera `cam` of `video` against a frozen `model`, starting at
/// zero. Only the offset moves. The returned offset is whichever of zero and
/// the optimized value gives the lower scored error on that camera.
pub fn optimize_test_offset(
    model: &FieldModel,
    video: &VideoSet,
    cam: usize,
    cfg: &CalibrationConfig,
    eval: &EvalConfig,
    exec: &Exec,
) -> Result<Calibration> {
    let camera = video.cameras.get(cam).ok_or(Error::CameraOutOfRange {
        index: cam,
        count: video.cameras.len(),
    })?;
    if cfg.batch_rays == 0 || cfg.chunk_rays == 0 || cfg.n_samples < 2 || !(cfg.lr > 0.0) {
        return Err(Error::Config("invalid calibration settings".into()));
    }
    let sampler = PixelSampler::new(cfg.sampler, video, cam, cfg.variance_eps)?;
    let rays: Vec<_> = (0..camera.height)
        .flat_map(|y| (0..camera.width).map(move |x| (x, y)))
        .map(|(x, y)| generate_ray(camera, [x as f64 + 0.5, y as f64 + 0.5], &model.bounds))
        .collect();
    let frames = &video.frames[cam];
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| -> Vec<RayRecord> {
        (0..n)
            .map(|i| {
                let f = rng.random_range(0..frames.len());
                let pixel = sampler.sample(rng);
                let p = frames[f].get_pixel((pixel % camera.width) as u32, (pixel / camera.width) as u32);
                RayRecord {
                    slot: Some(0),
                    ray: rays[pixel],
                    t: model.time_map.frame_to_time(f as f64),
                    target: [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0],
                    stream: i as u64,
                }
            })
            .collect()
    };
    let settings = |iter: u64| LossSettings {
        n_samples: cfg.n_samples,
        jitter: false,
        background: eval.background,
        seed: cfg.seed,
        iter,
    };
    let validation = draw(&mut pixel_rng(cfg.seed, u64::MAX, 0), cfg.validation_rays.max(1));
    let mut vtape = Tape::inference();
    let val_loss = |delta: f64, tape: &mut Tape| -> Result<f64> {
        rgb_loss_sum(model, &[delta], &validation, &settings(0), 0.0, tape, None)
    };
    let start = val_loss(0.0, &mut vtape)?;

    let mut delta = [0.0];
    let mut state = Moments::zeros(1);
    let adam = AdamConfig::default();
    let scale = 1.0 / cfg.batch_rays as f64;
    let n_chunks = cfg.batch_rays.div_ceil(cfg.chunk_rays);
    let mut parts: Vec<(Grads, Tape, Result<f64>)> = (0..n_chunks)
        .map(|_| (Grads::offsets_only(1), Tape::new(), Ok(0.0)))
        .collect();
    let mut history = Vec::with_capacity(cfg.iterations);
    for iter in 0..cfg.iterations {
        let batch = draw(&mut pixel_rng(cfg.seed, iter as u64, u64::MAX), cfg.batch_rays);
        let chunks: Vec<&[RayRecord]> = batch.chunks(cfg.chunk_rays).collect();
        let s = settings(iter as u64);
        let d = delta;
        exec.for_each_zip(&chunks, &mut parts, |chunk, (g, tape, loss)| {
            g.zero();
            *loss = rgb_loss_sum(model, &d, chunk, &s, scale, tape, Some(g));
        });
        let mut grad = 0.0;
        for (g, _, loss) in &mut parts {
            std::mem::replace(loss, Ok(0.0))?;
            grad += g.offsets[0];
        }
        adam_step("test_offset", &mut delta, &[grad], &mut state, iter as u64 + 1, cfg.lr, &adam)?;
        history.push(delta[0]);
        if cfg.check_every > 0 && (iter + 1) % cfg.check_every == 0 {
            let v = val_loss(delta[0], &mut vtape)?;
            if !v.is_finite() || v > cfg.divergence_factor * start.max(f64::MIN_POSITIVE) {
                return Err(Error::Diverged {
                    iteration: iter,
                    reason: format!("test offset validation loss rose from {start:.4e} to {v:.4e}"),
                    norms: format!("test_offset={:.4e}", delta[0]),
                });
            }
        }
    }
    let mse_zero = view_mse(model, video, cam, 0.0, eval, exec)?;
    let mse_optimized = if delta[0] == 0.0 {
        mse_zero
    } else {
        view_mse(model, video, cam, delta[0], eval, exec)?
    };
    Ok(Calibration {
        delta: if mse_optimized <= mse_zero { delta[0] } else { 0.0 },
        optimized_delta: delta[0],
        mse_zero,
        mse_optimized,
        history,
    })
}
