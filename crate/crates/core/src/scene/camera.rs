use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Pinhole camera. Camera axes: x right, y down, z forward. `rotation` and
/// `translation` map camera coordinates to world coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraModel {
    pub id: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub split: Split,
}

impl CameraModel {
    /// Camera at `position` looking at `target`, world `+y` up.
    pub fn look_at(id: usize, position: Vec3, target: Vec3, focal: f64, width: usize, height: usize, split: Split) -> Self {
        let forward = (target - position).normalize();
        let up = Vec3::new(0.0, 1.0, 0.0);
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        Self {
            id,
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation: Matrix3::from_columns(&[right, down, forward]),
            translation: position,
            split,
        }
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.column(2).into_owned()
    }

    /// Unit world direction through continuous image position `px`.
    pub fn ray_direction(&self, px: [f64; 2]) -> Vec3 {
        let d = Vec3::new((px[0] - self.cx) / self.focal, (px[1] - self.cy) / self.focal, 1.0);
        (self.rotation * d).normalize()
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("camera {} rotation is not a proper rotation", self.id)));
        }
        if !(self.focal > 0.0) || self.width < 8 || self.height < 8 {
            return Err(Error::InvalidArgument(format!("camera {} intrinsics out of range", self.id)));
        }
        Ok(())
    }

    /// 4×4 world←camera transform, row-major.
    pub fn pose_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0],
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1],
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2],
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn rotation_from_pose(pose: &[f64; 16]) -> (Matrix3<f64>, Vec3) {
        let r = Matrix3::new(
            pose[0], pose[1], pose[2],
            pose[4], pose[5], pose[6],
            pose[8], pose[9], pose[10],
        );
        (r, Vec3::new(pose[3], pose[7], pose[11]))
    }
}

/// Layout of the capture rig.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSpec {
    pub n_cameras: usize,
    pub width: usize,
    pub height: usize,
    /// Distance from the scene center.
    pub radius: f64,
    /// Half-angle of the spherical cap holding the training cameras, degrees.
    pub cap_degrees: f64,
    /// Focal length as a multiple of the image width.
    pub focal_factor: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            n_cameras: 8,
            width: 64,
            height: 64,
            radius: 4.0,
            cap_degrees: 30.0,
            focal_factor: 2.2,
        }
    }
}

/// Training cameras spread uniformly (Fibonacci spiral) over a spherical
/// cap facing the origin; the last camera sits at the cap center as the
/// test view.
pub fn camera_rig(spec: &RigSpec) -> Result<Vec<CameraModel>> {
    if spec.n_cameras < 3 {
        return Err(Error::InvalidArgument("rig needs at least two training cameras and one test camera".into()));
    }
    let n_train = spec.n_cameras - 1;
    let focal = spec.focal_factor * spec.width as f64;
    let cos_cap = spec.cap_degrees.to_radians().cos();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let target = Vec3::zeros();
    let mut cams = Vec::with_capacity(spec.n_cameras);
    for i in 0..n_train {
        // Equal-area bands over the cap, skipping the center.
        let cos_t = 1.0 - (i as f64 + 0.75) / n_train as f64 * (1.0 - cos_cap);
        let sin_t = (1.0 - cos_t * cos_t).sqrt();
        let phi = i as f64 * golden;
        let pos = spec.radius * Vec3::new(sin_t * phi.cos(), sin_t * phi.sin(), -cos_t);
        cams.push(CameraModel::look_at(i, pos, target, focal, spec.width, spec.height, Split::Train));
    }
    let center = Vec3::new(0.0, 0.0, -spec.radius);
    cams.push(CameraModel::look_at(n_train, center, target, focal, spec.width, spec.height, Split::Test));
    Ok(cams)
}
