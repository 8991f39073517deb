//! Six-plane spatiotemporal feature grid.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geom::{Aabb, Vec3};
use crate::params::{ParamStore, TensorId};
use crate::tape::{Coord, PlaneShape, Tape, Var};

/// Plane axis pairs in storage order; axis 3 is time.
pub const PLANE_AXES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];
pub const PLANE_NAMES: [&str; 6] = ["plane_xy", "plane_xz", "plane_yz", "plane_xt", "plane_yt", "plane_zt"];

/// Feature planes over `(x, y, z, t)`; time spans `[-1, 1]` on the time axis.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneGridField {
    pub planes: [TensorId; 6],
    pub spatial_res: usize,
    pub time_res: usize,
    pub dim: usize,
    pub bounds: Aabb,
}

impl PlaneGridField {
    pub fn init<R: Rng>(
        params: &mut ParamStore,
        spatial_res: usize,
        time_res: usize,
        dim: usize,
        bounds: Aabb,
        rng: &mut R,
    ) -> Self {
        assert!(spatial_res >= 2 && time_res >= 2 && dim >= 1);
        let space = Normal::new(0.0, 0.1).unwrap();
        let time = Normal::new(1.0, 0.01).unwrap();
        let mut ids = Vec::with_capacity(6);
        for (p, &(_, b)) in PLANE_AXES.iter().enumerate() {
            let cols = if b == 3 { time_res } else { spatial_res };
            let n = spatial_res * cols * dim;
            let data: Vec<f64> = if b == 3 {
                (0..n).map(|_| time.sample(rng)).collect()
            } else {
                (0..n).map(|_| space.sample(rng)).collect()
            };
            ids.push(params.add(PLANE_NAMES[p], &[spatial_res, cols, dim], data));
        }
        Self {
            planes: ids.try_into().unwrap(),
            spatial_res,
            time_res,
            dim,
            bounds,
        }
    }

    pub fn plane_shape(&self, p: usize) -> PlaneShape {
        let cols = if PLANE_AXES[p].1 == 3 {
            self.time_res
        } else {
            self.spatial_res
        };
        PlaneShape {
            rows: self.spatial_res,
            cols,
            dim: self.dim,
        }
    }

    /// Grid coordinates of a world position, one per spatial axis.
    pub fn spatial_coords(&self, x: &Vec3) -> [f64; 3] {
        let u = self.bounds.unit(x);
        let s = (self.spatial_res - 1) as f64;
        [u[0] * s, u[1] * s, u[2] * s]
    }

    /// `(scale, shift)` taking normalized time in `[-1, 1]` to grid units.
    pub fn time_affine(&self) -> (f64, f64) {
        let h = (self.time_res - 1) as f64 / 2.0;
        (h, h)
    }

    /// Fused feature: element-wise product of the six interpolated planes.
    pub fn sample(&self, tape: &mut Tape, params: &ParamStore, x: &Vec3, t: Var) -> Var {
        let g = self.spatial_coords(x);
        let (scale, shift) = self.time_affine();
        let coord = |axis: usize| {
            if axis == 3 {
                Coord::Affine { var: t, scale, shift }
            } else {
                Coord::Const(g[axis])
            }
        };
        let mut acc: Option<Var> = None;
        for (p, &(a, b)) in PLANE_AXES.iter().enumerate() {
            let f = tape.bilinear(params, self.planes[p], self.plane_shape(p), coord(a), coord(b));
            acc = Some(match acc {
                None => f,
                Some(prev) => tape.mul(prev, f),
            });
        }
        acc.unwrap()
    }

    /// Inference-only interpolation at `(x, t)`.
    pub fn grid_sample(&self, params: &ParamStore, x: &Vec3, t: f64) -> Vec<f64> {
        let mut tape = Tape::inference();
        let tv = tape.constant(&[t]);
        let out = self.sample(&mut tape, params, x, tv);
        tape.value(out).to_vec()
    }

    /// Sum of squared differences between adjacent time vertices, over the
    /// three time planes.
    pub fn time_smoothness(&self, params: &ParamStore) -> f64 {
        let mut total = 0.0;
        for p in 3..6 {
            let data = params.data(self.planes[p]);
            let s = self.plane_shape(p);
            for r in 0..s.rows {
                for c in 0..s.cols - 1 {
                    for d in 0..s.dim {
                        let a = data[(r * s.cols + c) * s.dim + d];
                        let b = data[(r * s.cols + c + 1) * s.dim + d];
                        total += (b - a) * (b - a);
                    }
                }
            }
        }
        total
    }

    /// Adds `weight · ∂(time_smoothness)/∂θ` into the time-plane gradients.
    pub fn time_smoothness_grad(&self, params: &ParamStore, weight: f64, grads: &mut crate::params::Grads) {
        for p in 3..6 {
            let data = params.data(self.planes[p]);
            let s = self.plane_shape(p);
            let g = grads.tensor_mut(self.planes[p]);
            for r in 0..s.rows {
                for c in 0..s.cols - 1 {
                    for d in 0..s.dim {
                        let ia = (r * s.cols + c) * s.dim + d;
                        let ib = (r * s.cols + c + 1) * s.dim + d;
                        let diff = 2.0 * weight * (data[ib] - data[ia]);
                        g[ib] += diff;
                        g[ia] -= diff;
                    }
                }
            }
        }
    }
}
