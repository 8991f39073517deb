use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geom::Vec3;
use crate::params::{ParamStore, TensorId};
use crate::tape::{Tape, Var};

/// Raw density bias at initialization: a faint fog that training clears.
const DENSITY_BIAS: f64 = -2.0;

/// Maps fused features to `(raw_rgb, raw_density)`.
#[derive(Clone, Debug, PartialEq)]
pub enum DecoderParams {
    Linear { w: TensorId, b: TensorId },
    Mlp { w1: TensorId, b1: TensorId, w2: TensorId, b2: TensorId },
}

impl DecoderParams {
    pub fn linear<R: Rng>(params: &mut ParamStore, n_in: usize, rng: &mut R) -> Self {
        let n = Normal::new(0.0, 1.0 / (n_in as f64).sqrt()).unwrap();
        let w = params.add("decoder_w", &[4, n_in], (0..4 * n_in).map(|_| n.sample(rng)).collect());
        let b = params.add("decoder_b", &[4], vec![0.0, 0.0, 0.0, DENSITY_BIAS]);
        Self::Linear { w, b }
    }

    pub fn mlp<R: Rng>(params: &mut ParamStore, n_in: usize, hidden: usize, rng: &mut R) -> Self {
        let n1 = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).unwrap();
        let w1 = params.add(
            "decoder_w1",
            &[hidden, n_in],
            (0..hidden * n_in).map(|_| n1.sample(rng)).collect(),
        );
        let b1 = params.add("decoder_b1", &[hidden], vec![0.0; hidden]);
        let n2 = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).unwrap();
        let w2 = params.add(
            "decoder_w2",
            &[4, hidden],
            (0..4 * hidden).map(|_| n2.sample(rng)).collect(),
        );
        let b2 = params.add("decoder_b2", &[4], vec![0.0, 0.0, 0.0, DENSITY_BIAS]);
        Self::Mlp { w1, b1, w2, b2 }
    }

    /// Returns `(color, density)` vars: `sigmoid(raw_rgb)`, `softplus(raw_density)`.
    pub fn decode(&self, tape: &mut Tape, params: &ParamStore, features: Var) -> (Var, Var) {
        let raw = match *self {
            Self::Linear { w, b } => tape.affine(params, w, b, features),
            Self::Mlp { w1, b1, w2, b2 } => {
                let h = tape.affine(params, w1, b1, features);
                let h = tape.relu(h);
                tape.affine(params, w2, b2, h)
            }
        };
        let rgb = tape.sigmoid(raw.slice(0, 3));
        let sigma = tape.softplus(raw.slice(3, 1));
        (rgb, sigma)
    }
}

/// Real spherical harmonics up to degree 2 (9 values) of a unit direction.
pub fn sh_basis(d: &Vec3) -> [f64; 9] {
    let (x, y, z) = (d[0], d[1], d[2]);
    [
        0.282_094_791_773_878_1,
        0.488_602_511_902_919_9 * y,
        0.488_602_511_902_919_9 * z,
        0.488_602_511_902_919_9 * x,
        1.092_548_430_592_079_2 * x * y,
        1.092_548_430_592_079_2 * y * z,
        0.315_391_565_252_520_05 * (3.0 * z * z - 1.0),
        1.092_548_430_592_079_2 * x * z,
        0.546_274_215_296_039_6 * (x * x - y * y),
    ]
}
