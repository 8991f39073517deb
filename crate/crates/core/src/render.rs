//! Pinhole rays and emission-absorption volume rendering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{FieldModel, OffsetTable};
use crate::frame::FloatImage;
use crate::geom::{Aabb, Vec3};
use crate::par::Exec;
use crate::scene::CameraModel;
use crate::tape::{Tape, Var};

pub type Rgb = [f64; 3];

pub const WHITE: Rgb = [1.0, 1.0, 1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, depth: f64) -> Vec3 {
        self.origin + self.dir * depth
    }
}

/// Quadrature points along one ray.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RaySamples {
    pub depths: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub deltas: Vec<f64>,
}

impl RaySamples {
    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

/// Ray through continuous image position `px` (pixel `i` spans `[i, i+1)`),
/// clipped to `bounds`. `None` when the ray misses the box.
pub fn generate_ray(camera: &CameraModel, px: [f64; 2], bounds: &Aabb) -> Option<Ray> {
    let origin = camera.translation;
    let dir = camera.ray_direction(px);
    let (near, far) = bounds.intersect(&origin, &dir)?;
    Some(Ray {
        origin,
        dir,
        near,
        far,
    })
}

/// Stratified samples: one per equal-width bin of `[near, far]`, at the bin
/// midpoint or uniformly jittered inside it. Each sample's segment runs
/// between the midpoints to its neighbours, so the first segment opens at
/// `near`, the last closes at `far`, and the segments tile the interval.
pub fn sample_along_ray<R: Rng + ?Sized>(ray: &Ray, n: usize, jitter: bool, rng: &mut R) -> RaySamples {
    assert!(n >= 1, "need at least one sample per ray");
    let width = (ray.far - ray.near) / n as f64;
    let depths: Vec<f64> = (0..n)
        .map(|i| {
            let u = if jitter { rng.random::<f64>() } else { 0.5 };
            ray.near + (i as f64 + u) * width
        })
        .collect();
    let mut deltas = Vec::with_capacity(n);
    let mut lo = ray.near;
    for i in 0..n {
        let hi = if i + 1 < n {
            0.5 * (depths[i] + depths[i + 1])
        } else {
            ray.far
        };
        deltas.push(hi - lo);
        lo = hi;
    }
    let positions = depths.iter().map(|&d| ray.at(d)).collect();
    RaySamples {
        depths,
        positions,
        deltas,
    }
}

/// `C = Σ T_i α_i c_i + T_N · bg` with `α_i = 1 − exp(−σ_i δ_i)`.
pub fn composite(colors: &[Rgb], densities: &[f64], deltas: &[f64], bg: Rgb) -> Result<Rgb> {
    if colors.len() != densities.len() || densities.len() != deltas.len() {
        return Err(Error::ShapeMismatch("composite inputs differ in length".into()));
    }
    let finite = colors.iter().flatten().chain(densities).chain(deltas).chain(&bg);
    if finite.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("composite input".into()));
    }
    if densities.iter().any(|&s| s < 0.0) {
        return Err(Error::InvalidArgument("negative density".into()));
    }
    let mut trans = 1.0;
    let mut rgb = [0.0; 3];
    for ((c, &sigma), &dt) in colors.iter().zip(densities).zip(deltas) {
        let alpha = 1.0 - (-sigma * dt).exp();
        let w = trans * alpha;
        for ch in 0..3 {
            rgb[ch] += w * c[ch];
        }
        trans *= 1.0 - alpha;
    }
    for ch in 0..3 {
        rgb[ch] += trans * bg[ch];
    }
    Ok(rgb)
}

/// Anything that can be rendered: per-ray batched `(color, density)` queries.
pub trait RadianceField: Sync {
    fn bounds(&self) -> Aabb;

    /// Fill `out` with `(color, density)` at each position for query time `t`.
    fn eval_ray(&self, positions: &[Vec3], dir: &Vec3, t: f64, out: &mut Vec<(Rgb, f64)>);
}

impl RadianceField for FieldModel {
    fn bounds(&self) -> Aabb {
        self.bounds
    }

    fn eval_ray(&self, positions: &[Vec3], dir: &Vec3, t: f64, out: &mut Vec<(Rgb, f64)>) {
        out.clear();
        let mut tape = Tape::inference();
        let tv = tape.constant(&[t]);
        let ctx = self.begin_ray(&mut tape, tv);
        for x in positions {
            let (c, s) = self.sample(&mut tape, &ctx, x, dir);
            let cv = tape.value(c);
            out.push(([cv[0], cv[1], cv[2]], tape.scalar_value(s)));
        }
    }
}

/// Rendering knobs shared by ground truth, training and evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    pub n_samples: usize,
    pub background: Rgb,
    pub jitter: bool,
}

impl RenderSettings {
    pub const GROUND_TRUTH_SAMPLES: usize = 256;

    pub fn new(n_samples: usize, background: Rgb) -> Self {
        Self {
            n_samples,
            background,
            jitter: false,
        }
    }
}

/// Forward render of one ray at query time `t`.
pub fn render_ray<F: RadianceField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    ray: Option<&Ray>,
    t: f64,
    settings: &RenderSettings,
    rng: &mut R,
) -> Result<Rgb> {
    let Some(ray) = ray else {
        return Ok(settings.background);
    };
    let samples = sample_along_ray(ray, settings.n_samples, settings.jitter, rng);
    let mut out = Vec::with_capacity(samples.len());
    field.eval_ray(&samples.positions, &ray.dir, t, &mut out);
    let colors: Vec<Rgb> = out.iter().map(|o| o.0).collect();
    let densities: Vec<f64> = out.iter().map(|o| o.1).collect();
    composite(&colors, &densities, &samples.deltas, settings.background)
}

/// Render pixel `px` of `camera` at normalized time `t`. With a training
/// camera index `k` the query time is shifted by `δ_k`; without one, `t` is
/// used as given (callers fold any chosen test offset into `t`).
#[allow(clippy::too_many_arguments)]
pub fn render_pixel<F: RadianceField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    camera: &CameraModel,
    px: [f64; 2],
    t: f64,
    k: Option<usize>,
    offsets: &OffsetTable,
    settings: &RenderSettings,
    rng: &mut R,
) -> Result<Rgb> {
    let tk = match k {
        Some(k) => offsets.shift_time(t, k)?,
        None => t,
    };
    let ray = generate_ray(camera, px, &field.bounds());
    render_ray(field, ray.as_ref(), tk, settings, rng)
}

/// Render a full image; rows are distributed over workers and each pixel
/// draws from its own RNG stream so output does not depend on the worker count.
pub fn render_image<F: RadianceField + ?Sized>(
    field: &F,
    camera: &CameraModel,
    t: f64,
    settings: &RenderSettings,
    seed: u64,
    exec: &Exec,
) -> Result<FloatImage> {
    let rows: Vec<usize> = (0..camera.height).collect();
    let bounds = field.bounds();
    let rendered = exec.map(&rows, |&y| -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(camera.width * 3);
        for x in 0..camera.width {
            let mut rng = pixel_rng(seed, y as u64, x as u64);
            let ray = generate_ray(camera, [x as f64 + 0.5, y as f64 + 0.5], &bounds);
            row.extend(render_ray(field, ray.as_ref(), t, settings, &mut rng)?);
        }
        Ok(row)
    });
    let mut data = Vec::with_capacity(camera.width * camera.height * 3);
    for r in rendered {
        data.extend(r?);
    }
    Ok(FloatImage::from_data(camera.width, camera.height, data))
}

/// Record one ray on `tape`: query time `t` (a tape var), samples along
/// `ray`, and compositing. Returns the RGB var.
pub fn render_ray_on_tape(
    model: &FieldModel,
    tape: &mut Tape,
    ray: &Ray,
    samples: &RaySamples,
    t: Var,
    background: Rgb,
) -> Var {
    let ctx = model.begin_ray(tape, t);
    let mut pairs = Vec::with_capacity(samples.len());
    for x in &samples.positions {
        pairs.push(model.sample(tape, &ctx, x, &ray.dir));
    }
    tape.composite(&pairs, &samples.deltas, background)
}

/// Independent, reproducible RNG stream for `(seed, a, b)`.
pub fn pixel_rng(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_ray() -> Ray {
        Ray {
            origin: Vec3::zeros(),
            dir: Vec3::new(0.0, 0.0, 1.0),
            near: 0.0,
            far: 1.0,
        }
    }

    #[test]
    fn midpoints_without_jitter() {
        let s = sample_along_ray(&unit_ray(), 4, false, &mut pixel_rng(0, 0, 0));
        assert_eq!(s.depths, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(s.deltas, vec![0.25; 4]);
    }

    #[test]
    fn transparent_medium_is_background() {
        let c = composite(&[[0.3, 0.2, 0.9]; 5], &[0.0; 5], &[0.2; 5], [0.1, 0.5, 0.7]).unwrap();
        assert_eq!(c, [0.1, 0.5, 0.7]);
    }

    #[test]
    fn single_segment_half_opacity() {
        let c = composite(&[[1.0, 0.0, 0.0]], &[std::f64::consts::LN_2], &[1.0], [0.0; 3]).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-15 && c[1] == 0.0 && c[2] == 0.0);
    }

    #[test]
    fn composite_rejects_bad_input() {
        assert!(matches!(
            composite(&[[f64::NAN, 0.0, 0.0]], &[1.0], &[1.0], WHITE),
            Err(Error::NonFinite(_))
        ));
        assert!(composite(&[[0.0; 3]], &[-1.0], &[1.0], WHITE).is_err());
        assert!(composite(&[[0.0; 3]], &[1.0, 2.0], &[1.0], WHITE).is_err());
    }

    proptest! {
        #[test]
        fn jittered_samples_stay_in_their_bins(seed in any::<u64>(), n in 1usize..64,
                                               near in 0.0f64..3.0, len in 0.01f64..5.0) {
            let ray = Ray { near, far: near + len, ..unit_ray() };
            let s = sample_along_ray(&ray, n, true, &mut pixel_rng(seed, 1, 2));
            let w = len / n as f64;
            for (i, d) in s.depths.iter().enumerate() {
                prop_assert!(*d >= near + i as f64 * w - 1e-12);
                prop_assert!(*d <= near + (i + 1) as f64 * w + 1e-12);
            }
            prop_assert!(s.deltas.iter().all(|&d| d > 0.0));
            prop_assert!((s.deltas.iter().sum::<f64>() - len).abs() < 1e-6);
        }

        #[test]
        fn weights_and_residual_sum_to_one(sigmas in prop::collection::vec(0.0f64..50.0, 1..32),
                                           dt in 0.001f64..0.5) {
            // With unit colors and zero background, C equals Σ T_i α_i.
            let n = sigmas.len();
            let fg = composite(&vec![[1.0; 3]; n], &sigmas, &vec![dt; n], [0.0; 3]).unwrap();
            let bg = composite(&vec![[0.0; 3]; n], &sigmas, &vec![dt; n], [1.0; 3]).unwrap();
            prop_assert!((fg[0] + bg[0] - 1.0).abs() < 1e-6);
        }

        #[test]
        fn background_enters_affinely(sigmas in prop::collection::vec(0.0f64..10.0, 1..16),
                                      b in 0.0f64..1.0) {
            let n = sigmas.len();
            let cols = vec![[0.2, 0.4, 0.6]; n];
            let d = vec![0.1; n];
            let c0 = composite(&cols, &sigmas, &d, [0.0; 3]).unwrap();
            let c1 = composite(&cols, &sigmas, &d, [1.0; 3]).unwrap();
            let cb = composite(&cols, &sigmas, &d, [b; 3]).unwrap();
            let residual: f64 = sigmas.iter().map(|s| (-s * 0.1f64).exp()).product();
            prop_assert!((c1[0] - c0[0] - residual).abs() < 1e-9);
            prop_assert!((cb[0] - (c0[0] + b * residual)).abs() < 1e-9);
        }
    }
}
