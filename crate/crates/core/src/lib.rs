//! Dynamic radiance fields trained jointly with per-camera time offsets.
//!
//! Multi-view videos recorded without hardware sync disagree about *when*
//! each frame happened. Every training camera here gets one learnable scalar
//! offset that shifts its query time; offsets and field are optimized
//! together through the volume-rendering loss.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod field;
pub mod frame;
pub mod geom;
pub mod optim;
pub mod par;
pub mod params;
pub mod render;
pub mod scene;
pub mod tape;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use field::{FieldModel, ModelConfig, ModelKind, OffsetTable, TimeMap};
pub use par::Exec;
