//! PSNR and SSIM against straightforward per-window computations.

use dynsync::eval::{psnr, ssim};
use dynsync::frame::FloatImage;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FloatImage {
    FloatImage::from_data(w, h, (0..w * h * 3).map(|_| rng.random::<f64>()).collect())
}

/// Correlated pair: `b` is `a` plus noise, clamped.
fn pair(seed: u64, w: usize, h: usize) -> (FloatImage, FloatImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_image(&mut rng, w, h);
    let noise = rng.random_range(0.02..0.4);
    let data = a
        .data
        .iter()
        .map(|v| (v + noise * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0))
        .collect();
    (a.clone(), FloatImage::from_data(w, h, data))
}

fn oracle_psnr(a: &FloatImage, b: &FloatImage) -> f64 {
    let mut sum = 0.0;
    for y in 0..a.height {
        for x in 0..a.width {
            let p = a.pixel(x, y);
            let q = b.pixel(x, y);
            for c in 0..3 {
                sum += (p[c] - q[c]).powi(2);
            }
        }
    }
    let mse = sum / (a.width * a.height * 3) as f64;
    10.0 * (1.0 / mse).log10()
}

/// Full 2-D window at every valid position, statistics summed directly.
fn oracle_ssim(a: &FloatImage, b: &FloatImage) -> f64 {
    let gray = |img: &FloatImage, x: usize, y: usize| {
        let p = img.pixel(x, y);
        (p[0] + p[1] + p[2]) / 3.0
    };
    let mut k = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut acc = 0.0;
    let mut count = 0;
    for y0 in 0..=a.height - 11 {
        for x0 in 0..=a.width - 11 {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (i, row) in k.iter().enumerate() {
                for (j, kv) in row.iter().enumerate() {
                    let w = kv / total;
                    let p = gray(a, x0 + j, y0 + i);
                    let q = gray(b, x0 + j, y0 + i);
                    mx += w * p;
                    my += w * q;
                    sxx += w * p * p;
                    syy += w * q * q;
                    sxy += w * p * q;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

#[test]
fn psnr_and_ssim_match_oracles_on_random_pairs() {
    for seed in 0..10 {
        let (w, h) = (16 + seed as usize * 3, 12 + seed as usize * 2);
        let (a, b) = pair(seed, w, h);
        let p = psnr(&a, &b).unwrap();
        let po = oracle_psnr(&a, &b);
        assert!((p - po).abs() < 1e-6, "psnr {p} vs {po}");
        let s = ssim(&a, &b).unwrap();
        let so = oracle_ssim(&a, &b);
        assert!((s - so).abs() < 1e-4, "ssim {s} vs {so}");
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn metrics_are_symmetric_and_bounded(seed in 0u64..10_000) {
        let (a, b) = pair(seed, 14, 13);
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        prop_assert!(psnr(&a, &b).unwrap() >= 0.0);
        let s = ssim(&a, &b).unwrap();
        prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!((-1.0..=1.0).contains(&s));
    }
}
