use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map between frame indices and normalized time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub n_frames: usize,
    pub fps: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl TimeMap {
    pub const DEFAULT_RANGE: (f64, f64) = (-0.8, 0.8);

    pub fn new(n_frames: usize, fps: f64) -> Self {
        Self::with_range(n_frames, fps, Self::DEFAULT_RANGE.0, Self::DEFAULT_RANGE.1)
    }

    pub fn with_range(n_frames: usize, fps: f64, t_lo: f64, t_hi: f64) -> Self {
        assert!(n_frames >= 2, "time map needs at least two frames");
        assert!(t_lo < t_hi, "empty time range");
        assert!(fps > 0.0);
        Self {
            n_frames,
            fps,
            t_lo,
            t_hi,
        }
    }

    /// Normalized time span of one frame.
    pub fn step(&self) -> f64 {
        (self.t_hi - self.t_lo) / (self.n_frames - 1) as f64
    }

    pub fn frame_to_time(&self, frame: f64) -> f64 {
        self.t_lo + (self.t_hi - self.t_lo) * frame / (self.n_frames - 1) as f64
    }

    pub fn time_to_frame(&self, t: f64) -> f64 {
        (t - self.t_lo) / self.step()
    }

    /// Normalized offset → frames.
    pub fn offset_to_frames(&self, delta: f64) -> f64 {
        delta / self.step()
    }

    pub fn frames_to_offset(&self, frames: f64) -> f64 {
        frames * self.step()
    }

    pub fn frames_to_seconds(&self, frames: f64) -> f64 {
        frames / self.fps
    }
}

/// Learnable per-camera time offsets in normalized time units.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetTable {
    pub deltas: Vec<f64>,
    pub frozen: bool,
}

impl OffsetTable {
    /// All offsets start at exactly zero.
    pub fn zeros(n_cameras: usize) -> Self {
        Self {
            deltas: vec![0.0; n_cameras],
            frozen: false,
        }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn get(&self, k: usize) -> Result<f64> {
        self.deltas
            .get(k)
            .copied()
            .ok_or(Error::CameraOutOfRange {
                index: k,
                count: self.deltas.len(),
            })
    }

    /// `t_k = t + δ_k`.
    pub fn shift_time(&self, t: f64, k: usize) -> Result<f64> {
        Ok(t + self.get(k)?)
    }

    /// Offsets with their mean removed.
    pub fn gauge_fixed(&self) -> Vec<f64> {
        gauge_fix(&self.deltas)
    }
}

/// Subtract the mean; only relative offsets are identifiable.
pub fn gauge_fix(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| v - mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_map_to_range() {
        let tm = TimeMap::new(120, 30.0);
        assert_eq!(tm.frame_to_time(0.0), -0.8);
        assert!((tm.frame_to_time(119.0) - 0.8).abs() < 1e-15);
        assert!((tm.time_to_frame(tm.frame_to_time(37.0)) - 37.0).abs() < 1e-12);
    }

    #[test]
    fn offset_units_round_trip() {
        let tm = TimeMap::new(120, 30.0);
        let d = tm.frames_to_offset(3.0);
        assert!((tm.offset_to_frames(d) - 3.0).abs() < 1e-12);
        assert!((tm.frames_to_seconds(3.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn shift_time_examples() {
        let mut o = OffsetTable::zeros(3);
        assert_eq!(o.shift_time(0.3, 1).unwrap(), 0.3);
        o.deltas[2] = -0.05;
        assert!((o.shift_time(0.3, 2).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            o.shift_time(0.3, 3),
            Err(Error::CameraOutOfRange { index: 3, count: 3 })
        ));
    }

    #[test]
    fn offsets_start_at_zero() {
        assert!(OffsetTable::zeros(7).deltas.iter().all(|&d| d == 0.0));
    }
}
