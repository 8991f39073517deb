use crate::error::{Error, Result};
use crate::field::{gauge_fix, TimeMap};
use crate::frame::FloatImage;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// Mean squared error over all channels.
pub fn mse(a: &FloatImage, b: &FloatImage) -> Result<f64> {
    a.same_shape(b)?;
    let n = a.data.len() as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// `10·log10(1/mse)`; infinite for zero error.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Peak signal-to-noise ratio in dB for images with unit dynamic range.
pub fn psnr(a: &FloatImage, b: &FloatImage) -> Result<f64> {
    mse(a, b).map(psnr_from_mse)
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let c = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable Gaussian filter, keeping only fully-covered ("valid") windows.
fn filter_valid(img: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> (Vec<f64>, usize, usize) {
    let ow = w + 1 - SSIM_WINDOW;
    let oh = h + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Structural similarity on the channel-mean gray images, averaged over
/// all valid 11×11 Gaussian windows.
pub fn ssim(a: &FloatImage, b: &FloatImage) -> Result<f64> {
    a.same_shape(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window",
            a.width, a.height
        )));
    }
    let (w, h) = (a.width, a.height);
    let x = a.gray();
    let y = b.gray();
    let k = gaussian_window();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let (mx, ..) = filter_valid(&x, w, h, &k);
    let (my, ..) = filter_valid(&y, w, h, &k);
    let (sxx, ..) = filter_valid(&xx, w, h, &k);
    let (syy, ..) = filter_valid(&yy, w, h, &k);
    let (sxy, ..) = filter_valid(&xy, w, h, &k);
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok((total / mx.len() as f64).clamp(-1.0, 1.0))
}

/// Gauge-fixed mean absolute offset error in seconds. `learned` is in
/// normalized time, `gt_frames` in frames.
pub fn offset_mae_seconds(learned: &[f64], gt_frames: Option<&[f64]>, time_map: &TimeMap) -> Result<f64> {
    let gt = gt_frames.ok_or(Error::MissingGroundTruth)?;
    if gt.len() != learned.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} learned offsets vs {} ground-truth offsets",
            learned.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Err(Error::MissingGroundTruth);
    }
    let frames: Vec<f64> = learned.iter().map(|&d| time_map.offset_to_frames(d)).collect();
    let a = gauge_fix(&frames);
    let b = gauge_fix(gt);
    let mae = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    Ok(time_map.frames_to_seconds(mae))
}
