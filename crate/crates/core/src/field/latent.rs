//! Spatial feature volume modulated by a time-conditioned embedding.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::encoding::encode_time;
use crate::geom::{Aabb, Vec3};
use crate::params::{ParamStore, TensorId};
use crate::tape::{Tape, Var, VolumeShape};

/// `z(t) = T_θ(γ(t, L))` with a two-layer MLP `T_θ`, combined per point with
/// trilinearly interpolated spatial features.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalLatentField {
    pub grid: TensorId,
    pub res: usize,
    pub dim: usize,
    pub n_freqs: usize,
    pub hidden: usize,
    pub w1: TensorId,
    pub b1: TensorId,
    pub w2: TensorId,
    pub b2: TensorId,
    pub bounds: Aabb,
    /// Per-frequency encoding weights while annealing; `None` is the full encoding.
    pub freq_weights: Option<Vec<f64>>,
}

impl TemporalLatentField {
    pub fn init<R: Rng>(
        params: &mut ParamStore,
        res: usize,
        dim: usize,
        n_freqs: usize,
        hidden: usize,
        bounds: Aabb,
        rng: &mut R,
    ) -> Self {
        assert!(res >= 2 && dim >= 1 && hidden >= 1);
        let g = Normal::new(0.0, 0.1).unwrap();
        let grid = params.add(
            "latent_grid",
            &[res, res, res, dim],
            (0..res * res * res * dim).map(|_| g.sample(rng)).collect(),
        );
        let n_in = (2 * n_freqs).max(1);
        let w1n = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).unwrap();
        let w1 = params.add(
            "time_mlp_w1",
            &[hidden, 2 * n_freqs],
            (0..hidden * 2 * n_freqs).map(|_| w1n.sample(rng)).collect(),
        );
        let b1 = params.add("time_mlp_b1", &[hidden], vec![0.0; hidden]);
        let w2n = Normal::new(0.0, 0.01).unwrap();
        let w2 = params.add(
            "time_mlp_w2",
            &[dim, hidden],
            (0..dim * hidden).map(|_| w2n.sample(rng)).collect(),
        );
        // Unit bias: the embedding starts out near-constant, i.e. a static field.
        let b2 = params.add("time_mlp_b2", &[dim], vec![1.0; dim]);
        Self {
            grid,
            res,
            dim,
            n_freqs,
            hidden,
            w1,
            b1,
            w2,
            b2,
            bounds,
            freq_weights: None,
        }
    }

    /// Coarse-to-fine window over the encoding frequencies. Frequency `l`
    /// gets weight `(1 - cos(π·clamp(alpha - l, 0, 1))) / 2`; `alpha >= L`
    /// or `None` restores the full encoding.
    pub fn set_frequency_window(&mut self, alpha: Option<f64>) {
        self.freq_weights = alpha.filter(|a| *a < self.n_freqs as f64).map(|a| {
            (0..self.n_freqs)
                .flat_map(|l| {
                    let w = (1.0 - (std::f64::consts::PI * (a - l as f64).clamp(0.0, 1.0)).cos()) / 2.0;
                    [w, w]
                })
                .collect()
        });
    }

    /// Whether a tensor name belongs to the temporal MLP.
    pub fn is_temporal(name: &str) -> bool {
        name.starts_with("time_mlp_")
    }

    pub fn shape(&self) -> VolumeShape {
        VolumeShape {
            res: [self.res; 3],
            dim: self.dim,
        }
    }

    /// Embedding for time var `t` on the tape.
    pub fn embed(&self, tape: &mut Tape, params: &ParamStore, t: Var) -> Var {
        let mut enc = tape.fourier(t, self.n_freqs);
        if let Some(w) = &self.freq_weights {
            let w = tape.constant(w);
            enc = tape.mul(enc, w);
        }
        let h = tape.affine(params, self.w1, self.b1, enc);
        let h = tape.relu(h);
        tape.affine(params, self.w2, self.b2, h)
    }

    pub fn temporal_embedding(&self, params: &ParamStore, t: f64) -> Vec<f64> {
        let mut tape = Tape::inference();
        let tv = tape.constant(&[t]);
        let z = self.embed(&mut tape, params, tv);
        tape.value(z).to_vec()
    }

    /// Encoding input that [`Self::embed`] feeds to the MLP.
    pub fn encoding(&self, t: f64) -> Vec<f64> {
        encode_time(t, self.n_freqs)
    }

    /// Spatial features modulated by `z`.
    pub fn sample(&self, tape: &mut Tape, params: &ParamStore, x: &Vec3, z: Var) -> Var {
        let u = self.bounds.unit(x);
        let s = (self.res - 1) as f64;
        let f = tape.trilinear(params, self.grid, self.shape(), [u[0] * s, u[1] * s, u[2] * s]);
        tape.mul(f, z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn field() -> (ParamStore, TemporalLatentField) {
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = TemporalLatentField::init(&mut params, 3, 4, 6, 8, Aabb::cube(1.0), &mut rng);
        (params, f)
    }

    #[test]
    fn embedding_has_latent_width_and_period_two() {
        let (params, f) = field();
        let z = f.temporal_embedding(&params, 0.3);
        assert_eq!(z.len(), 4);
        let w = f.temporal_embedding(&params, 2.3);
        for (a, b) in z.iter().zip(&w) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_window_gives_constant_embedding() {
        let (params, mut f) = field();
        f.set_frequency_window(Some(0.0));
        let a = f.temporal_embedding(&params, -0.4);
        let b = f.temporal_embedding(&params, 0.7);
        assert_eq!(a, b);
    }

    #[test]
    fn window_weights_ramp_per_frequency() {
        let (_, mut f) = field();
        f.set_frequency_window(Some(2.5));
        let w = f.freq_weights.clone().unwrap();
        assert_eq!(w.len(), 12);
        assert_eq!(&w[..4], &[1.0; 4]);
        assert!((w[4] - 0.5).abs() < 1e-12 && w[4] == w[5]);
        assert!(w[6..].iter().all(|v| *v == 0.0));
        f.set_frequency_window(Some(6.0));
        assert!(f.freq_weights.is_none());
    }

    #[test]
    fn open_window_matches_plain_encoding() {
        let (params, mut f) = field();
        let plain = f.temporal_embedding(&params, 0.21);
        f.set_frequency_window(Some(5.999_999_999));
        let almost = f.temporal_embedding(&params, 0.21);
        for (a, b) in plain.iter().zip(&almost) {
            assert!((a - b).abs() < 1e-9);
        }
        f.set_frequency_window(None);
        assert_eq!(f.temporal_embedding(&params, 0.21), plain);
    }
}
