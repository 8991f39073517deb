//! Reverse-mode automatic differentiation over small vector-valued ops.
//!
//! Every intermediate value lives in one flat buffer and is addressed by a
//! [`Var`] (offset + length). The forward pass pushes one [`Node`] per op;
//! [`Tape::backward`] walks the nodes in reverse and accumulates adjoints,
//! writing parameter and time-offset gradients into a [`Grads`].
//!
//! A tape built with [`Tape::inference`] computes values without recording.

use crate::params::{Grads, ParamStore, TensorId};

const NONE: u32 = u32::MAX;

/// A contiguous range of tape values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    off: u32,
    len: u32,
}

impl Var {
    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Sub-range view; no node is recorded.
    #[inline]
    pub fn slice(&self, start: usize, len: usize) -> Var {
        assert!(start + len <= self.len as usize);
        Var {
            off: self.off + start as u32,
            len: len as u32,
        }
    }

    #[inline]
    fn range(&self) -> std::ops::Range<usize> {
        self.off as usize..(self.off + self.len) as usize
    }
}

/// Interpolation coordinate in grid units.
#[derive(Clone, Copy, Debug)]
pub enum Coord {
    Const(f64),
    /// `grid = value(var) * scale + shift`, differentiable through `var`.
    Affine { var: Var, scale: f64, shift: f64 },
}

/// Layout of a feature plane tensor `[rows, cols, dim]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlaneShape {
    pub rows: usize,
    pub cols: usize,
    pub dim: usize,
}

/// Layout of a feature volume tensor `[nx, ny, nz, dim]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VolumeShape {
    pub res: [usize; 3],
    pub dim: usize,
}

#[derive(Clone, Copy, Debug)]
enum Node {
    Offset {
        k: u32,
        out: u32,
    },
    Add {
        a: Var,
        b: Var,
        out: Var,
    },
    Mul {
        a: Var,
        b: Var,
        out: Var,
    },
    Concat {
        a: Var,
        b: Var,
        out: Var,
    },
    Affine {
        w: TensorId,
        b: TensorId,
        input: Var,
        out: Var,
    },
    Relu {
        input: Var,
        out: Var,
    },
    Sigmoid {
        input: Var,
        out: Var,
    },
    Softplus {
        input: Var,
        out: Var,
    },
    Fourier {
        input: u32,
        out: Var,
    },
    Bilinear {
        tensor: TensorId,
        out: Var,
        base: u32,
        row_stride: u32,
        fu: f64,
        fv: f64,
        du: f64,
        dv: f64,
        u_src: u32,
        v_src: u32,
    },
    Trilinear {
        tensor: TensorId,
        out: Var,
        base: u32,
        strides: [u32; 3],
        frac: [f64; 3],
    },
    Composite {
        samples: u32,
        n: u32,
        deltas: u32,
        bg: [f64; 3],
        out: Var,
    },
    SquaredError {
        input: Var,
        target: u32,
        out: u32,
    },
}

/// Recorded computation for one ray (or any small scalar objective).
#[derive(Debug)]
pub struct Tape {
    vals: Vec<f64>,
    adj: Vec<f64>,
    nodes: Vec<Node>,
    aux: Vec<f64>,
    lists: Vec<Var>,
    trans: Vec<f64>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Split a grid coordinate into a cell index and fraction, clamping to the
/// grid. The flag is false when the coordinate was clamped.
#[inline]
pub(crate) fn cell(g: f64, res: usize) -> (usize, f64, bool) {
    let hi = (res - 1) as f64;
    let (g, inside) = if g < 0.0 {
        (0.0, false)
    } else if g > hi {
        (hi, false)
    } else {
        (g, true)
    };
    let i = (g.floor() as usize).min(res - 2);
    (i, g - i as f64, inside)
}

impl Tape {
    pub fn new() -> Self {
        Self {
            vals: Vec::with_capacity(4096),
            adj: Vec::new(),
            nodes: Vec::with_capacity(512),
            aux: Vec::with_capacity(256),
            lists: Vec::with_capacity(256),
            trans: Vec::new(),
            recording: true,
        }
    }

    /// Value-only tape: ops compute results but record nothing.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn clear(&mut self) {
        self.vals.clear();
        self.nodes.clear();
        self.aux.clear();
        self.lists.clear();
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &[f64] {
        &self.vals[v.range()]
    }

    #[inline]
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.vals[v.off as usize]
    }

    #[inline]
    fn alloc(&mut self, len: usize) -> Var {
        let off = self.vals.len();
        self.vals.resize(off + len, 0.0);
        Var {
            off: off as u32,
            len: len as u32,
        }
    }

    #[inline]
    fn push(&mut self, node: Node) {
        if self.recording {
            self.nodes.push(node);
        }
    }

    pub fn constant(&mut self, values: &[f64]) -> Var {
        let off = self.vals.len();
        self.vals.extend_from_slice(values);
        Var {
            off: off as u32,
            len: values.len() as u32,
        }
    }

    /// Leaf for time offset `k`; its adjoint lands in `Grads::offsets[k]`.
    pub fn offset(&mut self, offsets: &[f64], k: usize) -> Var {
        let out = self.constant(&[offsets[k]]);
        self.push(Node::Offset {
            k: k as u32,
            out: out.off,
        });
        out
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(a.len, b.len);
        let out = self.alloc(a.len());
        for i in 0..a.len() {
            self.vals[out.off as usize + i] =
                self.vals[a.off as usize + i] + self.vals[b.off as usize + i];
        }
        self.push(Node::Add { a, b, out });
        out
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(a.len, b.len);
        let out = self.alloc(a.len());
        for i in 0..a.len() {
            self.vals[out.off as usize + i] =
                self.vals[a.off as usize + i] * self.vals[b.off as usize + i];
        }
        self.push(Node::Mul { a, b, out });
        out
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let out = self.alloc(a.len() + b.len());
        self.vals
            .copy_within(a.range(), out.off as usize);
        self.vals
            .copy_within(b.range(), out.off as usize + a.len());
        self.push(Node::Concat { a, b, out });
        out
    }

    /// `W·x + b` with `W` stored row-major as `[out, in]`.
    pub fn affine(&mut self, params: &ParamStore, w: TensorId, b: TensorId, x: Var) -> Var {
        let bias = params.data(b);
        let wd = params.data(w);
        let n_in = x.len();
        let n_out = bias.len();
        debug_assert_eq!(wd.len(), n_in * n_out);
        let out = self.alloc(n_out);
        let (head, tail) = self.vals.split_at_mut(out.off as usize);
        let xin = &head[x.range()];
        for (o, dst) in tail[..n_out].iter_mut().enumerate() {
            let row = &wd[o * n_in..(o + 1) * n_in];
            let mut acc = bias[o];
            for (wi, xi) in row.iter().zip(xin) {
                acc += wi * xi;
            }
            *dst = acc;
        }
        self.push(Node::Affine { w, b, input: x, out });
        out
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64) -> Var {
        let out = self.alloc(x.len());
        for i in 0..x.len() {
            self.vals[out.off as usize + i] = f(self.vals[x.off as usize + i]);
        }
        out
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.unary(x, |v| v.max(0.0));
        self.push(Node::Relu { input: x, out });
        out
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.unary(x, sigmoid);
        self.push(Node::Sigmoid { input: x, out });
        out
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let out = self.unary(x, softplus);
        self.push(Node::Softplus { input: x, out });
        out
    }

    /// Interleaved `[sin(2^l π t), cos(2^l π t)]` for `l = 0..n_freqs`.
    pub fn fourier(&mut self, t: Var, n_freqs: usize) -> Var {
        assert_eq!(t.len, 1);
        let tv = self.scalar_value(t);
        let out = self.alloc(2 * n_freqs);
        crate::field::encoding::encode_time_into(
            tv,
            &mut self.vals[out.off as usize..out.off as usize + 2 * n_freqs],
        );
        self.push(Node::Fourier { input: t.off, out });
        out
    }

    /// Bilinear lookup into a `[rows, cols, dim]` plane.
    pub fn bilinear(
        &mut self,
        params: &ParamStore,
        tensor: TensorId,
        shape: PlaneShape,
        u: Coord,
        v: Coord,
    ) -> Var {
        let (gu, su, u_src) = self.resolve(u);
        let (gv, sv, v_src) = self.resolve(v);
        let (iu, fu, in_u) = cell(gu, shape.rows);
        let (iv, fv, in_v) = cell(gv, shape.cols);
        let d = shape.dim;
        let row_stride = shape.cols * d;
        let base = iu * row_stride + iv * d;
        let data = params.data(tensor);
        let out = self.alloc(d);
        let w00 = (1.0 - fu) * (1.0 - fv);
        let w01 = (1.0 - fu) * fv;
        let w10 = fu * (1.0 - fv);
        let w11 = fu * fv;
        let p00 = &data[base..base + d];
        let p01 = &data[base + d..base + 2 * d];
        let p10 = &data[base + row_stride..base + row_stride + d];
        let p11 = &data[base + row_stride + d..base + row_stride + 2 * d];
        let dst = &mut self.vals[out.off as usize..out.off as usize + d];
        for c in 0..d {
            dst[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
        }
        self.push(Node::Bilinear {
            tensor,
            out,
            base: base as u32,
            row_stride: row_stride as u32,
            fu,
            fv,
            du: if in_u { su } else { 0.0 },
            dv: if in_v { sv } else { 0.0 },
            u_src,
            v_src,
        });
        out
    }

    /// Trilinear lookup into a `[nx, ny, nz, dim]` volume at constant grid coordinates.
    pub fn trilinear(
        &mut self,
        params: &ParamStore,
        tensor: TensorId,
        shape: VolumeShape,
        g: [f64; 3],
    ) -> Var {
        let d = shape.dim;
        let strides = [
            shape.res[1] * shape.res[2] * d,
            shape.res[2] * d,
            d,
        ];
        let mut base = 0;
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let (i, f, _) = cell(g[a], shape.res[a]);
            base += i * strides[a];
            frac[a] = f;
        }
        let data = params.data(tensor);
        let out = self.alloc(d);
        let o = out.off as usize;
        self.vals[o..o + d].fill(0.0);
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = base;
            for (a, (&fa, &st)) in frac.iter().zip(&strides).enumerate() {
                if corner >> a & 1 == 1 {
                    w *= fa;
                    idx += st;
                } else {
                    w *= 1.0 - fa;
                }
            }
            let src = &data[idx..idx + d];
            for (v, s) in self.vals[o..o + d].iter_mut().zip(src) {
                *v += w * s;
            }
        }
        self.push(Node::Trilinear {
            tensor,
            out,
            base: base as u32,
            strides: [strides[0] as u32, strides[1] as u32, strides[2] as u32],
            frac,
        });
        out
    }

    /// Emission-absorption quadrature over `(color, density)` samples with
    /// segment lengths `deltas`; returns the composited RGB.
    pub fn composite(&mut self, samples: &[(Var, Var)], deltas: &[f64], bg: [f64; 3]) -> Var {
        assert_eq!(samples.len(), deltas.len());
        let list = self.lists.len() as u32;
        let aux = self.aux.len() as u32;
        if self.recording {
            for &(c, s) in samples {
                self.lists.push(c);
                self.lists.push(s);
            }
            self.aux.extend_from_slice(deltas);
        }
        let mut trans = 1.0;
        let mut rgb = [0.0; 3];
        for (&(c, s), &dt) in samples.iter().zip(deltas) {
            let sigma = self.vals[s.off as usize];
            let alpha = 1.0 - (-sigma * dt).exp();
            let w = trans * alpha;
            for (ch, acc) in rgb.iter_mut().enumerate() {
                *acc += w * self.vals[c.off as usize + ch];
            }
            trans *= 1.0 - alpha;
        }
        for ch in 0..3 {
            rgb[ch] += trans * bg[ch];
        }
        let out = self.constant(&rgb);
        self.push(Node::Composite {
            samples: list,
            n: samples.len() as u32,
            deltas: aux,
            bg,
            out,
        });
        out
    }

    /// `Σ (x_i − target_i)²` as a scalar.
    pub fn squared_error(&mut self, x: Var, target: &[f64]) -> Var {
        assert_eq!(x.len(), target.len());
        let t = self.aux.len() as u32;
        if self.recording {
            self.aux.extend_from_slice(target);
        }
        let s: f64 = self
            .value(x)
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let out = self.constant(&[s]);
        self.push(Node::SquaredError {
            input: x,
            target: t,
            out: out.off,
        });
        out
    }

    fn resolve(&self, c: Coord) -> (f64, f64, u32) {
        match c {
            Coord::Const(g) => (g, 0.0, NONE),
            Coord::Affine { var, scale, shift } => {
                debug_assert_eq!(var.len, 1);
                (self.vals[var.off as usize] * scale + shift, scale, var.off)
            }
        }
    }

    /// Propagate `seed` from the scalar `out` back through every recorded node.
    pub fn backward(&mut self, out: Var, seed: f64, params: &ParamStore, grads: &mut Grads) {
        assert!(self.recording, "backward on an inference tape");
        assert_eq!(out.len, 1);
        let Tape {
            vals,
            adj,
            nodes,
            aux,
            lists,
            trans,
            ..
        } = self;
        adj.clear();
        adj.resize(vals.len(), 0.0);
        adj[out.off as usize] = seed;
        let track = grads.tracks_params();
        for node in nodes.iter().rev() {
            match *node {
                Node::Offset { k, out } => {
                    grads.offsets[k as usize] += adj[out as usize];
                }
                Node::Add { a, b, out } => {
                    for i in 0..out.len() {
                        let g = adj[out.off as usize + i];
                        adj[a.off as usize + i] += g;
                        adj[b.off as usize + i] += g;
                    }
                }
                Node::Mul { a, b, out } => {
                    for i in 0..out.len() {
                        let g = adj[out.off as usize + i];
                        let av = vals[a.off as usize + i];
                        let bv = vals[b.off as usize + i];
                        adj[a.off as usize + i] += g * bv;
                        adj[b.off as usize + i] += g * av;
                    }
                }
                Node::Concat { a, b, out } => {
                    for i in 0..a.len() {
                        adj[a.off as usize + i] += adj[out.off as usize + i];
                    }
                    for i in 0..b.len() {
                        adj[b.off as usize + i] += adj[out.off as usize + a.len() + i];
                    }
                }
                Node::Affine { w, b, input, out } => {
                    let n_in = input.len();
                    let wd = params.data(w);
                    for o in 0..out.len() {
                        let g = adj[out.off as usize + o];
                        if g == 0.0 {
                            continue;
                        }
                        let row = &wd[o * n_in..(o + 1) * n_in];
                        for i in 0..n_in {
                            adj[input.off as usize + i] += g * row[i];
                        }
                    }
                    if track {
                        let xin = &vals[input.range()];
                        let gw = grads.tensor_mut(w);
                        for o in 0..out.len() {
                            let g = adj[out.off as usize + o];
                            if g == 0.0 {
                                continue;
                            }
                            let row = &mut gw[o * n_in..(o + 1) * n_in];
                            for (dst, xi) in row.iter_mut().zip(xin) {
                                *dst += g * xi;
                            }
                        }
                        let gb = grads.tensor_mut(b);
                        for o in 0..out.len() {
                            gb[o] += adj[out.off as usize + o];
                        }
                    }
                }
                Node::Relu { input, out } => {
                    for i in 0..out.len() {
                        if vals[input.off as usize + i] > 0.0 {
                            adj[input.off as usize + i] += adj[out.off as usize + i];
                        }
                    }
                }
                Node::Sigmoid { input, out } => {
                    for i in 0..out.len() {
                        let s = vals[out.off as usize + i];
                        adj[input.off as usize + i] += adj[out.off as usize + i] * s * (1.0 - s);
                    }
                }
                Node::Softplus { input, out } => {
                    for i in 0..out.len() {
                        let x = vals[input.off as usize + i];
                        adj[input.off as usize + i] += adj[out.off as usize + i] * sigmoid(x);
                    }
                }
                Node::Fourier { input, out } => {
                    // d/dt sin(wt) = w cos(wt), d/dt cos(wt) = -w sin(wt)
                    let mut g = 0.0;
                    let mut freq = std::f64::consts::PI;
                    for l in 0..out.len() / 2 {
                        let s = vals[out.off as usize + 2 * l];
                        let c = vals[out.off as usize + 2 * l + 1];
                        g += freq
                            * (adj[out.off as usize + 2 * l] * c
                                - adj[out.off as usize + 2 * l + 1] * s);
                        freq *= 2.0;
                    }
                    adj[input as usize] += g;
                }
                Node::Bilinear {
                    tensor,
                    out,
                    base,
                    row_stride,
                    fu,
                    fv,
                    du,
                    dv,
                    u_src,
                    v_src,
                } => {
                    let d = out.len();
                    let base = base as usize;
                    let rs = row_stride as usize;
                    let g = &adj[out.range()];
                    let want_coord = (u_src != NONE && du != 0.0) || (v_src != NONE && dv != 0.0);
                    if want_coord {
                        let data = params.data(tensor);
                        let p00 = &data[base..base + d];
                        let p01 = &data[base + d..base + 2 * d];
                        let p10 = &data[base + rs..base + rs + d];
                        let p11 = &data[base + rs + d..base + rs + 2 * d];
                        let mut gu = 0.0;
                        let mut gv = 0.0;
                        for c in 0..d {
                            gu += g[c]
                                * ((1.0 - fv) * (p10[c] - p00[c]) + fv * (p11[c] - p01[c]));
                            gv += g[c]
                                * ((1.0 - fu) * (p01[c] - p00[c]) + fu * (p11[c] - p10[c]));
                        }
                        if u_src != NONE {
                            adj[u_src as usize] += gu * du;
                        }
                        if v_src != NONE {
                            adj[v_src as usize] += gv * dv;
                        }
                    }
                    if track {
                        let g = &adj[out.range()];
                        let w00 = (1.0 - fu) * (1.0 - fv);
                        let w01 = (1.0 - fu) * fv;
                        let w10 = fu * (1.0 - fv);
                        let w11 = fu * fv;
                        let gt = grads.tensor_mut(tensor);
                        for c in 0..d {
                            gt[base + c] += w00 * g[c];
                            gt[base + d + c] += w01 * g[c];
                            gt[base + rs + c] += w10 * g[c];
                            gt[base + rs + d + c] += w11 * g[c];
                        }
                    }
                }
                Node::Trilinear {
                    tensor,
                    out,
                    base,
                    strides,
                    frac,
                } => {
                    if track {
                        let d = out.len();
                        let g = &adj[out.range()];
                        let gt = grads.tensor_mut(tensor);
                        for corner in 0..8 {
                            let mut w = 1.0;
                            let mut idx = base as usize;
                            for a in 0..3 {
                                if corner >> a & 1 == 1 {
                                    w *= frac[a];
                                    idx += strides[a] as usize;
                                } else {
                                    w *= 1.0 - frac[a];
                                }
                            }
                            for c in 0..d {
                                gt[idx + c] += w * g[c];
                            }
                        }
                    }
                }
                Node::Composite {
                    samples,
                    n,
                    deltas,
                    bg,
                    out,
                } => {
                    let n = n as usize;
                    let list = &lists[samples as usize..samples as usize + 2 * n];
                    let dts = &aux[deltas as usize..deltas as usize + n];
                    let gout = [
                        adj[out.off as usize],
                        adj[out.off as usize + 1],
                        adj[out.off as usize + 2],
                    ];
                    // Suffix sums S_i = Σ_{j>i} w_j c_j + T_N bg, projected on gout.
                    trans.clear();
                    let mut t = 1.0;
                    for i in 0..n {
                        trans.push(t);
                        let sigma = vals[list[2 * i + 1].off as usize];
                        t *= (-sigma * dts[i]).exp();
                    }
                    trans.push(t);
                    let mut suffix = t * (gout[0] * bg[0] + gout[1] * bg[1] + gout[2] * bg[2]);
                    for i in (0..n).rev() {
                        let c = list[2 * i];
                        let s = list[2 * i + 1];
                        let sigma = vals[s.off as usize];
                        let dt = dts[i];
                        let ti = trans[i];
                        let tn = trans[i + 1];
                        let w = ti * (1.0 - (-sigma * dt).exp());
                        let mut cdot = 0.0;
                        for ch in 0..3 {
                            let cv = vals[c.off as usize + ch];
                            adj[c.off as usize + ch] += gout[ch] * w;
                            cdot += gout[ch] * cv;
                        }
                        adj[s.off as usize] += dt * (tn * cdot - suffix);
                        suffix += w * cdot;
                    }
                }
                Node::SquaredError { input, target, out } => {
                    let g = adj[out as usize];
                    for i in 0..input.len() {
                        let x = vals[input.off as usize + i];
                        let y = aux[target as usize + i];
                        adj[input.off as usize + i] += 2.0 * g * (x - y);
                    }
                }
            }
        }
    }
}
