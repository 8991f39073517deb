//! Synthetic multi-view dynamic scenes with exactly known motion and offsets.

mod camera;
pub mod dataset;

pub use camera::{camera_rig, CameraModel, RigSpec, Split};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::TimeMap;
use crate::geom::{Aabb, Vec3};
use crate::par::Exec;
use crate::render::{render_image, RadianceField, RenderSettings, Rgb};

/// Blob center as a function of time in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Trajectory {
    Static([f64; 3]),
    /// `base + amplitude ⊙ sin(2π·freq·t + phase)` per axis.
    Sinusoid {
        base: [f64; 3],
        amplitude: [f64; 3],
        freq_hz: [f64; 3],
        phase: [f64; 3],
    },
}

impl Trajectory {
    pub fn center(&self, t: f64) -> Vec3 {
        match self {
            Self::Static(p) => Vec3::from(*p),
            Self::Sinusoid {
                base,
                amplitude,
                freq_hz,
                phase,
            } => Vec3::from_fn(|a, _| {
                base[a] + amplitude[a] * (std::f64::consts::TAU * freq_hz[a] * t + phase[a]).sin()
            }),
        }
    }

    /// Axis-wise bounding box of the center over all time.
    pub fn envelope(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Self::Static(p) => (*p, *p),
            Self::Sinusoid { base, amplitude, .. } => {
                let lo = std::array::from_fn(|a| base[a] - amplitude[a].abs());
                let hi = std::array::from_fn(|a| base[a] + amplitude[a].abs());
                (lo, hi)
            }
        }
    }
}

/// Isotropic Gaussian density blob with constant emission color.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovingBlob {
    pub trajectory: Trajectory,
    pub radius: f64,
    pub peak_density: f64,
    pub color: Rgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicScene {
    pub blobs: Vec<MovingBlob>,
    pub background: Rgb,
    pub bounds: Aabb,
    pub duration_s: f64,
}

/// Parameters of the procedural scene generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub seed: u64,
    pub n_blobs: usize,
    pub half_extent: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub peak_density: f64,
    pub max_amplitude: f64,
    pub min_freq_hz: f64,
    pub max_freq_hz: f64,
    pub background: Rgb,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_blobs: 3,
            half_extent: 1.0,
            min_radius: 0.16,
            max_radius: 0.22,
            peak_density: 30.0,
            max_amplitude: 0.35,
            min_freq_hz: 0.25,
            max_freq_hz: 0.45,
            background: crate::render::WHITE,
        }
    }
}

const PALETTE: [Rgb; 6] = [
    [0.85, 0.15, 0.1],
    [0.1, 0.3, 0.85],
    [0.1, 0.65, 0.2],
    [0.9, 0.7, 0.1],
    [0.6, 0.15, 0.7],
    [0.1, 0.7, 0.75],
];

impl DynamicScene {
    /// Blob 0 is stationary near the center; the rest move on smooth
    /// sinusoidal paths that stay inside the bounds.
    pub fn procedural(spec: &SceneSpec, duration_s: f64) -> Result<Self> {
        if !(2..=PALETTE.len()).contains(&spec.n_blobs) {
            return Err(Error::InvalidArgument(format!("n_blobs must be in 2..={}", PALETTE.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let h = spec.half_extent;
        let mut blobs = Vec::with_capacity(spec.n_blobs);
        for (i, color) in PALETTE.iter().take(spec.n_blobs).enumerate() {
            let radius = rng.random_range(spec.min_radius..=spec.max_radius);
            // Keep the center plus two radii inside the box.
            let room = h - 2.0 * radius;
            let trajectory = if i == 0 {
                Trajectory::Static(std::array::from_fn(|_| rng.random_range(-0.15..0.15) * h))
            } else {
                let amplitude: [f64; 3] =
                    std::array::from_fn(|_| rng.random_range(0.5..1.0) * spec.max_amplitude * h);
                let base: [f64; 3] = std::array::from_fn(|a| {
                    let slack = (room - amplitude[a]).max(0.0);
                    rng.random_range(-1.0..1.0) * slack.min(0.3 * h)
                });
                Trajectory::Sinusoid {
                    base,
                    amplitude,
                    freq_hz: std::array::from_fn(|_| rng.random_range(spec.min_freq_hz..=spec.max_freq_hz)),
                    phase: std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU)),
                }
            };
            blobs.push(MovingBlob {
                trajectory,
                radius,
                peak_density: spec.peak_density,
                color: *color,
            });
        }
        let scene = Self {
            blobs,
            background: spec.background,
            bounds: Aabb::cube(h),
            duration_s,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty() {
            return Err(Error::EmptyBounds);
        }
        for (i, b) in self.blobs.iter().enumerate() {
            if !(b.radius > 0.0) || !(b.peak_density >= 0.0) || !b.peak_density.is_finite() {
                return Err(Error::InvalidArgument(format!("blob {i} has invalid radius/density")));
            }
            let (lo, hi) = b.trajectory.envelope();
            if !self.bounds.contains(&Vec3::from(lo)) || !self.bounds.contains(&Vec3::from(hi)) {
                return Err(Error::InvalidArgument(format!("blob {i} leaves the scene bounds")));
            }
        }
        Ok(())
    }

    /// `(color, density)` at `x`, time `t` in seconds.
    pub fn query(&self, x: &Vec3, t: f64) -> (Rgb, f64) {
        let centers: Vec<Vec3> = self.blobs.iter().map(|b| b.trajectory.center(t)).collect();
        self.query_with_centers(&centers, x)
    }

    fn query_with_centers(&self, centers: &[Vec3], x: &Vec3) -> (Rgb, f64) {
        let mut sigma = 0.0;
        let mut rgb = [0.0; 3];
        for (b, c) in self.blobs.iter().zip(centers) {
            let d2 = (x - c).norm_squared();
            let r2 = b.radius * b.radius;
            // Beyond six radii the density is below 2e-8 of the peak.
            if d2 > 36.0 * r2 {
                continue;
            }
            let s = b.peak_density * (-d2 / (2.0 * r2)).exp();
            sigma += s;
            for (v, c) in rgb.iter_mut().zip(b.color) {
                *v += s * c;
            }
        }
        if sigma > 0.0 {
            for v in &mut rgb {
                *v /= sigma;
            }
        }
        (rgb, sigma)
    }

    /// Whether any blob moves.
    pub fn is_static(&self) -> bool {
        self.blobs
            .iter()
            .all(|b| matches!(b.trajectory, Trajectory::Static(_)))
    }
}

/// Scene queried in seconds directly.
impl RadianceField for DynamicScene {
    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn eval_ray(&self, positions: &[Vec3], _dir: &Vec3, t: f64, out: &mut Vec<(Rgb, f64)>) {
        out.clear();
        let centers: Vec<Vec3> = self.blobs.iter().map(|b| b.trajectory.center(t)).collect();
        out.extend(positions.iter().map(|x| self.query_with_centers(&centers, x)));
    }
}

/// Scene queried in normalized time, converted to seconds through a time map.
pub struct TimedScene<'a> {
    pub scene: &'a DynamicScene,
    pub time_map: TimeMap,
}

impl RadianceField for TimedScene<'_> {
    fn bounds(&self) -> Aabb {
        self.scene.bounds
    }

    fn eval_ray(&self, positions: &[Vec3], dir: &Vec3, t: f64, out: &mut Vec<(Rgb, f64)>) {
        let seconds = self.time_map.time_to_frame(t) / self.time_map.fps;
        self.scene.eval_ray(positions, dir, seconds, out);
    }
}

/// Multi-view video: one frame sequence per camera.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSet {
    pub cameras: Vec<CameraModel>,
    pub frames: Vec<Vec<RgbImage>>,
    pub fps: f64,
    pub n_frames: usize,
    pub width: usize,
    pub height: usize,
    pub bounds: Aabb,
    /// Per-camera offsets in frames, when known.
    pub offsets_gt: Option<Vec<f64>>,
}

impl VideoSet {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.cameras.len() != self.frames.len() {
            return bad("camera and video counts differ".into());
        }
        for (cam, video) in self.cameras.iter().zip(&self.frames) {
            cam.validate()?;
            if cam.width != self.width || cam.height != self.height {
                return bad(format!("camera {} has a different resolution", cam.id));
            }
            if video.len() != self.n_frames {
                return bad(format!("camera {} has {} frames, expected {}", cam.id, video.len(), self.n_frames));
            }
            if video
                .iter()
                .any(|f| f.width() as usize != self.width || f.height() as usize != self.height)
            {
                return bad(format!("camera {} has a frame of the wrong size", cam.id));
            }
        }
        if let Some(o) = &self.offsets_gt {
            if o.len() != self.cameras.len() {
                return bad("offsets_gt length differs from camera count".into());
            }
        }
        Ok(())
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.cameras.len())
            .filter(|&i| self.cameras[i].split == Split::Train)
            .collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (0..self.cameras.len())
            .filter(|&i| self.cameras[i].split == Split::Test)
            .collect()
    }

    pub fn time_map(&self) -> TimeMap {
        TimeMap::new(self.n_frames, self.fps)
    }

    /// Keep only the first `n` frames of every camera.
    pub fn truncate(&mut self, n: usize) -> Result<()> {
        if n < 2 || n > self.n_frames {
            return Err(Error::InvalidArgument(format!("cannot crop {} frames to {n}", self.n_frames)));
        }
        for v in &mut self.frames {
            v.truncate(n);
        }
        self.n_frames = n;
        Ok(())
    }
}

/// Per-camera offsets in frames drawn from `N(0, σ²)`, optionally rounded.
pub fn sample_offsets(n_cameras: usize, sigma_frames: f64, seed: u64, round_to_int: bool) -> Result<Vec<f64>> {
    if n_cameras < 2 {
        return Err(Error::InvalidArgument("need at least two cameras".into()));
    }
    if !(sigma_frames >= 0.0) || !sigma_frames.is_finite() {
        return Err(Error::InvalidArgument("sigma must be finite and non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma_frames).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..n_cameras)
        .map(|_| {
            let v: f64 = normal.sample(&mut rng);
            // `+ 0.0` folds a negative zero into zero.
            if round_to_int {
                v.round() + 0.0
            } else {
                v
            }
        })
        .collect())
}

/// Render frame `f` of every camera at time `f / fps` with the fixed
/// ground-truth sample count.
pub fn render_ground_truth(
    scene: &DynamicScene,
    cameras: &[CameraModel],
    fps: f64,
    n_frames: usize,
    exec: &Exec,
) -> Result<VideoSet> {
    if scene.bounds.is_empty() {
        return Err(Error::EmptyBounds);
    }
    if n_frames < 2 {
        return Err(Error::InvalidArgument("need at least two frames".into()));
    }
    let first = cameras
        .first()
        .ok_or_else(|| Error::InvalidArgument("no cameras".into()))?;
    for c in cameras {
        c.validate()?;
    }
    let settings = RenderSettings::new(RenderSettings::GROUND_TRUTH_SAMPLES, scene.background);
    let jobs: Vec<(usize, usize)> = (0..cameras.len())
        .flat_map(|c| (0..n_frames).map(move |f| (c, f)))
        .collect();
    // Frames are independent; rows stay sequential inside each job.
    let images = exec.map(&jobs, |&(c, f)| {
        render_image(scene, &cameras[c], f as f64 / fps, &settings, 0, &Exec::sequential())
            .map(|img| img.to_rgb8())
    });
    let mut frames: Vec<Vec<RgbImage>> = vec![Vec::with_capacity(n_frames); cameras.len()];
    for (&(c, _), img) in jobs.iter().zip(images) {
        frames[c].push(img?);
    }
    let video = VideoSet {
        cameras: cameras.to_vec(),
        frames,
        fps,
        n_frames,
        width: first.width,
        height: first.height,
        bounds: scene.bounds,
        offsets_gt: None,
    };
    video.validate()?;
    Ok(video)
}

/// Shift each camera's video by its offset and keep the overlapping
/// interval: output frame `f` of camera `k` is input frame
/// `f + offset_k − min(offsets)`. Stored ground truth is re-based so the
/// smallest offset is zero.
pub fn apply_unsync(video: &VideoSet, offsets_frames: &[i64]) -> Result<VideoSet> {
    if offsets_frames.len() != video.cameras.len() {
        return Err(Error::InvalidArgument("one offset per camera required".into()));
    }
    let min = *offsets_frames.iter().min().unwrap();
    let max = *offsets_frames.iter().max().unwrap();
    let spread = max - min;
    let max_abs = offsets_frames.iter().map(|o| o.unsigned_abs()).max().unwrap();
    if 4 * max_abs as usize >= video.n_frames || spread as usize >= video.n_frames {
        return Err(Error::NoOverlap {
            spread,
            n_frames: video.n_frames,
        });
    }
    let n_out = video.n_frames - spread as usize;
    let frames = video
        .frames
        .iter()
        .zip(offsets_frames)
        .map(|(v, &o)| {
            let start = (o - min) as usize;
            v[start..start + n_out].to_vec()
        })
        .collect();
    Ok(VideoSet {
        frames,
        n_frames: n_out,
        offsets_gt: Some(offsets_frames.iter().map(|&o| (o - min) as f64).collect()),
        ..video.clone()
    })
}

/// Capture parameters of a synthesized dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Frames per camera at unit offset scale.
    pub n_frames: usize,
    pub fps: f64,
    /// Standard deviation of the per-camera offsets, frames.
    pub sigma_frames: f64,
    pub unsync_scale: f64,
    /// Extra frames rendered beyond `n_frames`; the output is cropped by
    /// `margin_frames × unsync_scale`.
    pub margin_frames: usize,
    pub offset_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_frames: 120,
            fps: 30.0,
            sigma_frames: 5.0,
            unsync_scale: 1.0,
            margin_frames: 30,
            offset_seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn raw_frames(&self) -> usize {
        self.n_frames + self.margin_frames
    }

    /// Frames kept per camera after offsets are applied.
    pub fn output_frames(&self) -> Result<usize> {
        let cut = (self.margin_frames as f64 * self.unsync_scale).round();
        let raw = self.raw_frames() as f64;
        if !(self.unsync_scale >= 0.0) || cut >= raw - 1.0 {
            return Err(Error::InvalidArgument(format!(
                "offset scale {} leaves no frames",
                self.unsync_scale
            )));
        }
        Ok((raw - cut) as usize)
    }

    /// Integer offsets: base draws scaled, then rounded again.
    pub fn offsets(&self, n_cameras: usize) -> Result<Vec<i64>> {
        let base = sample_offsets(n_cameras, self.sigma_frames, self.offset_seed, true)?;
        Ok(base.iter().map(|o| (o * self.unsync_scale).round() as i64).collect())
    }
}

/// Apply the configured offsets to an already rendered synchronized video
/// of `raw_frames()` frames.
pub fn unsync_dataset(raw: &VideoSet, cfg: &SynthConfig) -> Result<VideoSet> {
    if raw.n_frames != cfg.raw_frames() {
        return Err(Error::InvalidArgument(format!(
            "raw video has {} frames, expected {}",
            raw.n_frames,
            cfg.raw_frames()
        )));
    }
    let offsets = cfg.offsets(raw.cameras.len())?;
    let mut video = apply_unsync(raw, &offsets)?;
    let keep = cfg.output_frames()?;
    if keep > video.n_frames {
        let spread = offsets.iter().max().unwrap() - offsets.iter().min().unwrap();
        return Err(Error::NoOverlap {
            spread,
            n_frames: keep,
        });
    }
    video.truncate(keep)?;
    Ok(video)
}

/// Render the procedural scene and apply offsets.
pub fn synthesize(scene: &SceneSpec, rig: &RigSpec, cfg: &SynthConfig, exec: &Exec) -> Result<VideoSet> {
    let raw_frames = cfg.raw_frames();
    let scene = DynamicScene::procedural(scene, raw_frames as f64 / cfg.fps)?;
    let cameras = camera_rig(rig)?;
    let raw = render_ground_truth(&scene, &cameras, cfg.fps, raw_frames, exec)?;
    unsync_dataset(&raw, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_video(n_cams: usize, n_frames: usize) -> VideoSet {
        let cams = camera_rig(&RigSpec {
            n_cameras: n_cams,
            width: 8,
            height: 8,
            ..RigSpec::default()
        })
        .unwrap();
        let frames = (0..n_cams)
            .map(|c| {
                (0..n_frames)
                    .map(|f| RgbImage::from_pixel(8, 8, image::Rgb([c as u8, f as u8, 7])))
                    .collect()
            })
            .collect();
        VideoSet {
            cameras: cams,
            frames,
            fps: 30.0,
            n_frames,
            width: 8,
            height: 8,
            bounds: Aabb::cube(1.0),
            offsets_gt: None,
        }
    }

    #[test]
    fn zero_sigma_gives_zero_offsets() {
        assert_eq!(sample_offsets(3, 0.0, 1, true).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn rounded_offsets_are_integers_and_small() {
        let o = sample_offsets(14, 5.0, 7, true).unwrap();
        assert_eq!(o.len(), 14);
        assert!(o.iter().all(|v| v.fract() == 0.0 && v.abs() <= 20.0));
    }

    #[test]
    fn offsets_golden() {
        // Pinned output of the seeded generator.
        assert_eq!(sample_offsets(5, 5.0, 42, true).unwrap(), GOLDEN_5_42);
    }

    const GOLDEN_5_42: [f64; 5] = [2.0, 7.0, -1.0, 2.0, -3.0];

    #[test]
    fn offsets_reject_bad_args() {
        assert!(sample_offsets(1, 5.0, 0, true).is_err());
        assert!(sample_offsets(4, -1.0, 0, true).is_err());
    }

    #[test]
    fn unsync_identity() {
        let v = tiny_video(3, 20);
        let u = apply_unsync(&v, &[0, 0, 0]).unwrap();
        assert_eq!(u.frames, v.frames);
        assert_eq!(u.offsets_gt, Some(vec![0.0; 3]));
    }

    #[test]
    fn unsync_shifts_frames() {
        let v = tiny_video(3, 20);
        let u = apply_unsync(&v, &[0, 3, 1]).unwrap();
        assert_eq!(u.n_frames, 17);
        assert_eq!(u.frames[1][0], v.frames[1][3]);
        assert_eq!(u.frames[2][5], v.frames[2][6]);
        assert_eq!(u.offsets_gt, Some(vec![0.0, 3.0, 1.0]));
    }

    #[test]
    fn unsync_rebases_negative_offsets() {
        let v = tiny_video(3, 40);
        let u = apply_unsync(&v, &[-2, 4, 0]).unwrap();
        assert_eq!(u.n_frames, 34);
        assert_eq!(u.offsets_gt, Some(vec![0.0, 6.0, 2.0]));
        assert_eq!(u.frames[0][0], v.frames[0][0]);
        assert_eq!(u.frames[1][0], v.frames[1][6]);
    }

    #[test]
    fn unsync_crop_length_matches_margin() {
        let v = tiny_video(3, 300);
        let u = apply_unsync(&v, &[-12, 18, 0]).unwrap();
        assert_eq!(u.n_frames, 270);
    }

    #[test]
    fn unsync_rejects_large_offsets() {
        let v = tiny_video(3, 20);
        assert!(matches!(apply_unsync(&v, &[0, 5, 0]), Err(Error::NoOverlap { .. })));
    }

    #[test]
    fn synth_crop_lengths() {
        let mut cfg = SynthConfig::default();
        assert_eq!(cfg.output_frames().unwrap(), 120);
        cfg.unsync_scale = 1.5;
        assert_eq!(cfg.output_frames().unwrap(), 105);
        cfg.unsync_scale = 2.0;
        assert_eq!(cfg.output_frames().unwrap(), 90);
    }

    #[test]
    fn scaled_offsets_are_rounded_multiples() {
        let base = SynthConfig::default().offsets(8).unwrap();
        let cfg = SynthConfig {
            unsync_scale: 1.5,
            ..Default::default()
        };
        let scaled = cfg.offsets(8).unwrap();
        for (b, s) in base.iter().zip(&scaled) {
            assert_eq!(*s, (*b as f64 * 1.5).round() as i64);
        }
    }

    #[test]
    fn unsync_dataset_keeps_requested_frames() {
        let cfg = SynthConfig {
            n_frames: 40,
            margin_frames: 30,
            ..Default::default()
        };
        let v = tiny_video(4, 70);
        let u = unsync_dataset(&v, &cfg).unwrap();
        assert_eq!(u.n_frames, 40);
        let gt = u.offsets_gt.unwrap();
        assert_eq!(gt.iter().cloned().fold(f64::INFINITY, f64::min), 0.0);
    }

    #[test]
    fn rig_rotations_are_proper() {
        for c in camera_rig(&RigSpec::default()).unwrap() {
            c.validate().unwrap();
        }
    }

    #[test]
    fn procedural_scene_stays_in_bounds() {
        for seed in 0..20 {
            let s = DynamicScene::procedural(&SceneSpec { seed, n_blobs: 4, ..Default::default() }, 5.0).unwrap();
            for b in &s.blobs {
                for i in 0..50 {
                    assert!(s.bounds.contains(&b.trajectory.center(i as f64 * 0.1)));
                }
            }
        }
    }

    #[test]
    fn density_is_nonnegative_and_finite() {
        let s = DynamicScene::procedural(&SceneSpec::default(), 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = Vec3::from_fn(|_, _| rng.random_range(-1.5..1.5));
            let (c, s) = s.query(&x, rng.random_range(0.0..5.0));
            assert!(s.is_finite() && s >= 0.0);
            assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
