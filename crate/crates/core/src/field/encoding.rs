//! Sinusoidal time encoding.

use std::f64::consts::PI;

/// `[sin(2⁰πt), cos(2⁰πt), …, sin(2^{L−1}πt), cos(2^{L−1}πt)]`.
pub fn encode_time(t: f64, n_freqs: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * n_freqs];
    encode_time_into(t, &mut out);
    out
}

pub(crate) fn encode_time_into(t: f64, out: &mut [f64]) {
    debug_assert!(out.len().is_multiple_of(2));
    let mut scale = 1.0;
    for pair in out.chunks_exact_mut(2) {
        // Scaling by a power of two is exact, and so is the reduction mod 2,
        // which keeps the phase accurate for large frequencies.
        let phase = (t * scale).rem_euclid(2.0);
        let (s, c) = (PI * phase).sin_cos();
        pair[0] = s;
        pair[1] = c;
        scale *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_time_is_all_sin0_cos1() {
        assert_eq!(encode_time(0.0, 3), vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn unit_time_hits_exact_multiples_of_pi() {
        let e = encode_time(1.0, 2);
        let want = [0.0, -1.0, 0.0, 1.0];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{e:?}");
        }
    }

    #[test]
    fn quarter_time() {
        let e = encode_time(0.25, 1);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e[0] - r).abs() < 1e-12 && (e[1] - r).abs() < 1e-12);
    }

    #[test]
    fn empty_encoding() {
        assert!(encode_time(0.3, 0).is_empty());
    }

    proptest! {
        #[test]
        fn period_two(t in -1.0f64..1.0) {
            let a = encode_time(t, 10);
            let b = encode_time(t + 2.0, 10);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
