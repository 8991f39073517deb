use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::decoder::{sh_basis, DecoderParams};
use super::latent::TemporalLatentField;
use super::plane::PlaneGridField;
use super::time::{OffsetTable, TimeMap};
use crate::error::{Error, Result};
use crate::geom::{Aabb, Vec3};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Six feature planes with a linear decoder.
    PlaneExplicit,
    /// Six feature planes with an MLP decoder.
    PlaneHybrid,
    /// Spatial volume modulated by an implicit temporal embedding.
    Latent,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [Self::PlaneExplicit, Self::PlaneHybrid, Self::Latent];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::PlaneExplicit => "plane-explicit",
            Self::PlaneHybrid => "plane-hybrid",
            Self::Latent => "latent",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model `{s}`")))
    }
}

/// Model family and sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub spatial_res: usize,
    pub time_res: usize,
    pub feature_dim: usize,
    pub decoder_hidden: usize,
    pub latent_res: usize,
    pub latent_dim: usize,
    pub time_hidden: usize,
    pub n_freqs: usize,
    pub direction: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::PlaneHybrid,
            spatial_res: 32,
            time_res: 32,
            feature_dim: 16,
            decoder_hidden: 32,
            latent_res: 32,
            latent_dim: 16,
            time_hidden: 64,
            n_freqs: 10,
            direction: false,
            init_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldRepr {
    Planes(PlaneGridField),
    Latent(TemporalLatentField),
}

/// Per-ray state: the query time var, plus the embedding for latent fields.
#[derive(Clone, Copy, Debug)]
pub struct RayCtx {
    pub t: Var,
    z: Option<Var>,
}

/// Trainable dynamic field: representation, decoder and time offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub config: ModelConfig,
    pub bounds: Aabb,
    pub time_map: TimeMap,
    pub params: ParamStore,
    pub repr: FieldRepr,
    pub decoder: DecoderParams,
    pub offsets: OffsetTable,
}

impl FieldModel {
    pub fn new(config: ModelConfig, bounds: Aabb, time_map: TimeMap, n_train_cameras: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::EmptyBounds);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let mut params = ParamStore::new();
        let (repr, feat_dim) = match config.kind {
            ModelKind::PlaneExplicit | ModelKind::PlaneHybrid => {
                let p = PlaneGridField::init(
                    &mut params,
                    config.spatial_res,
                    config.time_res,
                    config.feature_dim,
                    bounds,
                    &mut rng,
                );
                (FieldRepr::Planes(p), config.feature_dim)
            }
            ModelKind::Latent => {
                let l = TemporalLatentField::init(
                    &mut params,
                    config.latent_res,
                    config.latent_dim,
                    config.n_freqs,
                    config.time_hidden,
                    bounds,
                    &mut rng,
                );
                (FieldRepr::Latent(l), config.latent_dim)
            }
        };
        let n_in = feat_dim + if config.direction { 9 } else { 0 };
        let decoder = match config.kind {
            ModelKind::PlaneExplicit => DecoderParams::linear(&mut params, n_in, &mut rng),
            _ => DecoderParams::mlp(&mut params, n_in, config.decoder_hidden, &mut rng),
        };
        Ok(Self {
            config,
            bounds,
            time_map,
            params,
            repr,
            decoder,
            offsets: OffsetTable::zeros(n_train_cameras),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn planes(&self) -> Option<&PlaneGridField> {
        match &self.repr {
            FieldRepr::Planes(p) => Some(p),
            FieldRepr::Latent(_) => None,
        }
    }

    pub fn latent(&self) -> Option<&TemporalLatentField> {
        match &self.repr {
            FieldRepr::Latent(l) => Some(l),
            FieldRepr::Planes(_) => None,
        }
    }

    /// Coarse-to-fine window for the time encoding of latent fields; no-op
    /// for plane fields.
    pub fn set_frequency_window(&mut self, alpha: Option<f64>) {
        if let FieldRepr::Latent(l) = &mut self.repr {
            l.set_frequency_window(alpha);
        }
    }

    /// Per-ray setup; the latent embedding depends only on time, so it is
    /// computed once per ray.
    pub fn begin_ray(&self, tape: &mut Tape, t: Var) -> RayCtx {
        let z = match &self.repr {
            FieldRepr::Planes(_) => None,
            FieldRepr::Latent(l) => Some(l.embed(tape, &self.params, t)),
        };
        RayCtx { t, z }
    }

    /// `(color, density)` vars at `x` seen along `d`.
    pub fn sample(&self, tape: &mut Tape, ctx: &RayCtx, x: &Vec3, d: &Vec3) -> (Var, Var) {
        let features = match &self.repr {
            FieldRepr::Planes(p) => p.sample(tape, &self.params, x, ctx.t),
            FieldRepr::Latent(l) => l.sample(tape, &self.params, x, ctx.z.expect("ray context without embedding")),
        };
        let input = if self.config.direction {
            let sh = tape.constant(&sh_basis(d));
            tape.concat(features, sh)
        } else {
            features
        };
        self.decoder.decode(tape, &self.params, input)
    }

    /// Color in `(0,1)³` and density `≥ 0` at `(x, d, t_k)`.
    pub fn eval_field(&self, x: &Vec3, d: &Vec3, t: f64) -> Result<([f64; 3], f64)> {
        if !(x.iter().all(|v| v.is_finite()) && d.iter().all(|v| v.is_finite()) && t.is_finite()) {
            return Err(Error::NonFinite("field query".into()));
        }
        if self.config.direction && (d.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument("direction must be unit length".into()));
        }
        let mut tape = Tape::inference();
        let tv = tape.constant(&[t]);
        let ctx = self.begin_ray(&mut tape, tv);
        let (c, s) = self.sample(&mut tape, &ctx, x, d);
        let c = tape.value(c);
        let out = ([c[0], c[1], c[2]], tape.scalar_value(s));
        if !(out.0.iter().all(|v| v.is_finite()) && out.1.is_finite()) {
            return Err(Error::NonFinite("field output".into()));
        }
        Ok(out)
    }

    /// Interpolated plane feature at `(x, t)`; plane models only.
    pub fn grid_sample(&self, x: &Vec3, t: f64) -> Result<Vec<f64>> {
        let p = self
            .planes()
            .ok_or_else(|| Error::InvalidArgument("grid_sample needs a plane model".into()))?;
        if !(x.iter().all(|v| v.is_finite()) && t.is_finite()) {
            return Err(Error::NonFinite("grid query".into()));
        }
        let f = p.grid_sample(&self.params, x, t);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("plane parameters".into()));
        }
        Ok(f)
    }

    /// Temporal embedding `z(t)`; latent models only.
    pub fn temporal_embedding(&self, t: f64) -> Result<Vec<f64>> {
        let l = self
            .latent()
            .ok_or_else(|| Error::InvalidArgument("temporal_embedding needs a latent model".into()))?;
        Ok(l.temporal_embedding(&self.params, t))
    }

    /// Round parameters and offsets to the on-disk `f32` precision.
    pub fn quantize(&mut self) {
        self.params.quantize_f32();
        for d in &mut self.offsets.deltas {
            *d = *d as f32 as f64;
        }
    }
}
