//! Trainable dynamic-field representations and time offsets.

pub mod checkpoint;
pub mod decoder;
pub mod encoding;
pub mod latent;
pub mod model;
pub mod plane;
pub mod time;

pub use decoder::DecoderParams;
pub use encoding::encode_time;
pub use latent::TemporalLatentField;
pub use model::{FieldModel, FieldRepr, ModelConfig, ModelKind, RayCtx};
pub use plane::PlaneGridField;
pub use time::{gauge_fix, OffsetTable, TimeMap};
