use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::VideoSet;

/// How training pixels are drawn within a camera.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Uniform,
    /// Pixels whose color changes over time are drawn more often.
    #[default]
    TemporalVariance,
}

fn luma(p: &image::Rgb<u8>) -> f64 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
}

/// Per-pixel weight `std_f(luma) + eps` for camera `cam`, normalized to sum to one.
pub fn temporal_variance_weights(video: &VideoSet, cam: usize, eps: f64) -> Result<Vec<f64>> {
    let frames = video.frames.get(cam).ok_or(Error::CameraOutOfRange {
        index: cam,
        count: video.frames.len(),
    })?;
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("variance floor must be positive".into()));
    }
    let n = video.width * video.height;
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for img in frames {
        for (i, p) in img.pixels().enumerate() {
            let y = luma(p);
            sum[i] += y;
            sum_sq[i] += y * y;
        }
    }
    let f = frames.len() as f64;
    let mut w: Vec<f64> = sum
        .iter()
        .zip(&sum_sq)
        .map(|(s, q)| {
            let mean = s / f;
            (q / f - mean * mean).max(0.0).sqrt() + eps
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    Ok(w)
}

/// Draws pixel indices for one camera.
#[derive(Clone, Debug)]
pub enum PixelSampler {
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl PixelSampler {
    pub fn new(kind: SamplerKind, video: &VideoSet, cam: usize, eps: f64) -> Result<Self> {
        match kind {
            SamplerKind::Uniform => Ok(Self::Uniform(video.width * video.height)),
            SamplerKind::TemporalVariance => {
                let w = temporal_variance_weights(video, cam, eps)?;
                WeightedIndex::new(&w)
                    .map(Self::Weighted)
                    .map_err(|e| Error::InvalidArgument(e.to_string()))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            Self::Uniform(n) => rng.random_range(0..*n),
            Self::Weighted(w) => w.sample(rng),
        }
    }
}
