//! Image metrics, offset error and reports for trained models.

mod metrics;

pub use metrics::{mse, offset_mae_seconds, psnr, psnr_from_mse, ssim, SSIM_SIGMA, SSIM_WINDOW};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{gauge_fix, FieldModel};
use crate::frame::FloatImage;
use crate::par::Exec;
use crate::render::{render_image, render_pixel, pixel_rng, RenderSettings, Rgb, WHITE};
use crate::scene::{CameraModel, VideoSet};

/// How held-out views are rendered for scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Score every `frame_stride`-th frame.
    pub frame_stride: usize,
    pub n_samples: usize,
    pub background: Rgb,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            frame_stride: 4,
            n_samples: 48,
            background: WHITE,
        }
    }
}

impl EvalConfig {
    pub fn settings(&self) -> RenderSettings {
        RenderSettings::new(self.n_samples, self.background)
    }

    pub fn frames(&self, n_frames: usize) -> Vec<usize> {
        (0..n_frames).step_by(self.frame_stride.max(1)).collect()
    }
}

/// Render `camera` at each listed frame, query time shifted by `delta`.
pub fn render_view(
    model: &FieldModel,
    camera: &CameraModel,
    frames: &[usize],
    delta: f64,
    cfg: &EvalConfig,
    exec: &Exec,
) -> Result<Vec<FloatImage>> {
    let settings = cfg.settings();
    frames
        .iter()
        .map(|&f| {
            let t = model.time_map.frame_to_time(f as f64) + delta;
            render_image(model, camera, t, &settings, 0, exec)
        })
        .collect()
}

/// Pooled MSE of camera `cam` over the scored frames.
pub fn view_mse(model: &FieldModel, video: &VideoSet, cam: usize, delta: f64, cfg: &EvalConfig, exec: &Exec) -> Result<f64> {
    Ok(score_view(model, video, cam, delta, cfg, exec)?.0)
}

fn score_view(
    model: &FieldModel,
    video: &VideoSet,
    cam: usize,
    delta: f64,
    cfg: &EvalConfig,
    exec: &Exec,
) -> Result<(f64, f64)> {
    let camera = video.cameras.get(cam).ok_or(Error::CameraOutOfRange {
        index: cam,
        count: video.cameras.len(),
    })?;
    let frames = cfg.frames(video.n_frames);
    let renders = render_view(model, camera, &frames, delta, cfg, exec)?;
    let mut err = 0.0;
    let mut s = 0.0;
    for (&f, img) in frames.iter().zip(&renders) {
        let gt = FloatImage::from_rgb8(&video.frames[cam][f]);
        err += mse(img, &gt)?;
        s += ssim(img, &gt)?;
    }
    let n = frames.len() as f64;
    Ok((err / n, s / n))
}

/// PSNR with infinity encoded as `null` plus a flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Db {
    pub value: Option<f64>,
    pub infinite: bool,
}

impl From<f64> for Db {
    fn from(v: f64) -> Self {
        if v.is_infinite() {
            Self {
                value: None,
                infinite: true,
            }
        } else {
            Self {
                value: Some(v),
                infinite: false,
            }
        }
    }
}

impl Db {
    pub fn get(&self) -> f64 {
        self.value.unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub camera: usize,
    pub psnr: Db,
    pub ssim: f64,
    /// Query-time shift applied to this view, in frames.
    pub offset_frames: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: Db,
    pub mean_ssim: f64,
    /// Reserved; always `null`.
    pub lpips: Option<f64>,
    pub offset_mae_seconds: Option<f64>,
    /// Learned training-camera offsets in frames, mean removed.
    pub deltas_frames: Vec<f64>,
    pub config_fingerprint: String,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Score every test camera of `video`. `test_deltas` holds one query-time
/// shift per test camera (normalized), or is empty for none.
pub fn evaluate(
    model: &FieldModel,
    video: &VideoSet,
    test_deltas: &[f64],
    cfg: &EvalConfig,
    fingerprint: &str,
    exec: &Exec,
) -> Result<EvalReport> {
    let test = video.test_indices();
    if test.is_empty() {
        return Err(Error::InvalidArgument("dataset has no test camera".into()));
    }
    if !test_deltas.is_empty() && test_deltas.len() != test.len() {
        return Err(Error::ShapeMismatch("one test offset per test camera".into()));
    }
    let mut views = Vec::with_capacity(test.len());
    for (i, &cam) in test.iter().enumerate() {
        let delta = test_deltas.get(i).copied().unwrap_or(0.0);
        let (err, s) = score_view(model, video, cam, delta, cfg, exec)?;
        views.push(ViewMetrics {
            camera: video.cameras[cam].id,
            psnr: psnr_from_mse(err).into(),
            ssim: s,
            offset_frames: model.time_map.offset_to_frames(delta),
        });
    }
    let n = views.len() as f64;
    let mean_psnr = views.iter().map(|v| v.psnr.get()).sum::<f64>() / n;
    let mean_ssim = views.iter().map(|v| v.ssim).sum::<f64>() / n;
    let gt = video
        .offsets_gt
        .as_ref()
        .map(|o| video.train_indices().iter().map(|&i| o[i]).collect::<Vec<_>>());
    let offset_mae_seconds = match gt {
        Some(g) => Some(offset_mae_seconds(&model.offsets.deltas, Some(&g), &model.time_map)?),
        None => None,
    };
    let frames: Vec<f64> = model
        .offsets
        .deltas
        .iter()
        .map(|&d| model.time_map.offset_to_frames(d))
        .collect();
    Ok(EvalReport {
        views,
        mean_psnr: mean_psnr.into(),
        mean_ssim,
        lpips: None,
        offset_mae_seconds,
        deltas_frames: gauge_fix(&frames),
        config_fingerprint: fingerprint.to_string(),
    })
}

/// A fixed pixel column rendered at every frame time, stacked left to right
/// into an `height × n_frames` image.
pub fn spatiotemporal_image(
    model: &FieldModel,
    camera: &CameraModel,
    column_px: usize,
    delta: f64,
    settings: &RenderSettings,
    exec: &Exec,
) -> Result<FloatImage> {
    if column_px >= camera.width {
        return Err(Error::InvalidArgument(format!(
            "column {column_px} outside image of width {}",
            camera.width
        )));
    }
    let n = model.time_map.n_frames;
    let frames: Vec<usize> = (0..n).collect();
    let columns = exec.map(&frames, |&f| -> Result<Vec<Rgb>> {
        let t = model.time_map.frame_to_time(f as f64) + delta;
        (0..camera.height)
            .map(|y| {
                let mut rng = pixel_rng(0, y as u64, column_px as u64);
                let px = [column_px as f64 + 0.5, y as f64 + 0.5];
                render_pixel(model, camera, px, t, None, &model.offsets, settings, &mut rng)
            })
            .collect()
    });
    let mut img = FloatImage::new(n, camera.height);
    for (f, col) in columns.into_iter().enumerate() {
        for (y, rgb) in col?.into_iter().enumerate() {
            img.set_pixel(f, y, rgb);
        }
    }
    Ok(img)
}

/// Mean absolute difference between horizontally adjacent pixels; on a
/// spatiotemporal image this measures frame-to-frame flicker.
pub fn column_total_variation(img: &FloatImage) -> f64 {
    if img.width < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for y in 0..img.height {
        for x in 0..img.width - 1 {
            let a = img.pixel(x, y);
            let b = img.pixel(x + 1, y);
            total += (0..3).map(|c| (a[c] - b[c]).abs()).sum::<f64>();
        }
    }
    total / ((img.width - 1) * img.height * 3) as f64
}
