//! Named parameter tensors and their gradient accumulators.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> TensorId {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor `{name}` shape does not match data"
        );
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        TensorId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: TensorId) -> &Tensor {
        &self.tensors[id.0]
    }

    #[inline]
    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.tensors[id.0].data
    }

    pub fn data_mut(&mut self, id: TensorId) -> &mut [f64] {
        &mut self.tensors[id.0].data
    }

    pub fn find(&self, name: &str) -> Option<TensorId> {
        self.tensors.iter().position(|t| t.name == name).map(TensorId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (TensorId, &Tensor)> {
        self.tensors.iter().enumerate().map(|(i, t)| (TensorId(i), t))
    }

    pub fn ids(&self) -> impl Iterator<Item = TensorId> {
        (0..self.tensors.len()).map(TensorId)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Round every value to the nearest `f32`, the precision used on disk.
    pub fn quantize_f32(&mut self) {
        for t in &mut self.tensors {
            for v in &mut t.data {
                *v = *v as f32 as f64;
            }
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for t in &self.tensors {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter `{}`", t.name)));
            }
        }
        Ok(())
    }

    /// SHA-256 over names, shapes and raw values.
    pub fn checksum(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for t in &self.tensors {
            h.update(t.name.as_bytes());
            for s in &t.shape {
                h.update((*s as u64).to_le_bytes());
            }
            for v in &t.data {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// `name=l2norm` pairs, used in divergence diagnostics.
    pub fn norms_summary(&self) -> String {
        self.tensors
            .iter()
            .map(|t| {
                let n = t.data.iter().map(|v| v * v).sum::<f64>().sqrt();
                format!("{}={:.4e}", t.name, n)
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// Gradient accumulators keyed by tensor id, plus one slot per time offset.
#[derive(Clone, Debug)]
pub struct Grads {
    pub tensors: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    track_params: bool,
}

impl Grads {
    pub fn zeros_like(params: &ParamStore, n_offsets: usize) -> Self {
        Self {
            tensors: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            offsets: vec![0.0; n_offsets],
            track_params: true,
        }
    }

    /// Accumulators for offsets only; parameter gradients are dropped.
    pub fn offsets_only(n_offsets: usize) -> Self {
        Self {
            tensors: Vec::new(),
            offsets: vec![0.0; n_offsets],
            track_params: false,
        }
    }

    #[inline]
    pub fn tracks_params(&self) -> bool {
        self.track_params
    }

    #[inline]
    pub fn tensor_mut(&mut self, id: TensorId) -> &mut [f64] {
        &mut self.tensors[id.0]
    }

    pub fn zero(&mut self) {
        for t in &mut self.tensors {
            t.fill(0.0);
        }
        self.offsets.fill(0.0);
    }

    /// `self += other`, element by element in a fixed order.
    pub fn accumulate(&mut self, other: &Grads) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for (x, y) in self.offsets.iter_mut().zip(&other.offsets) {
            *x += *y;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_is_idempotent() {
        let mut p = ParamStore::new();
        p.add("a", &[3], vec![0.1, 1.0 / 3.0, -2.5]);
        p.quantize_f32();
        let once = p.clone();
        p.quantize_f32();
        assert_eq!(once, p);
        assert_eq!(p.data(TensorId(0))[2], -2.5);
    }

    #[test]
    fn checksum_tracks_values() {
        let mut p = ParamStore::new();
        let id = p.add("a", &[2], vec![1.0, 2.0]);
        let before = p.checksum();
        p.data_mut(id)[1] = 2.0 + 1e-12;
        assert_ne!(before, p.checksum());
    }
}
