//! Optimizers and the joint field/offset training loop.

mod adam;
mod calibrate;
mod sampler;
mod train;

pub use adam::{adam_step, Adam, AdamConfig, Moments};
pub use calibrate::{optimize_test_offset, Calibration, CalibrationConfig};
pub use sampler::{temporal_variance_weights, PixelSampler, SamplerKind};
pub use train::{
    rgb_loss, rgb_loss_sum, train, LossSettings, LrSchedule, MetricsRecord, OffsetHistory, RayRecord, TrainConfig,
    TrainOutput,
};
