use rand::Rng;

use super::ModelError;
use crate::scalar::{ElemKind, Scalar};

const MAGIC: &[u8; 4] = b"GNXT";
const VERSION: u16 = 1;

/// Dense row-major tensor. Activations use (channel, height, width) order and
/// filters use (out channel, in channel, row, column).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self, ModelError> {
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(ModelError::Usage(format!(
                "tensor dims {dims:?} need {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Self {
        let mut t = Self::zeros(dims);
        let mut idx = vec![0usize; dims.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            for axis in (0..idx.len()).rev() {
                idx[axis] += 1;
                if idx[axis] < dims[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        t
    }

    /// Values drawn from a 1/16 grid in [-2, 2), exactly representable in Q8.8.
    pub fn random<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        Self::from_fn(dims, |_| T::from_f64(f64::from(rng.gen_range(-32i32..32)) / 16.0))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d, "index {idx:?} out of bounds for {:?}", self.dims);
            acc * d + i
        })
    }

    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: T) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Contiguous row `(c, y)` of a rank-3 tensor.
    pub fn row(&self, c: usize, y: usize) -> &[T] {
        let w = self.dims[2];
        let start = (c * self.dims[1] + y) * w;
        &self.data[start..start + w]
    }

    /// First position where two tensors differ, for mismatch diagnostics.
    pub fn first_mismatch(&self, other: &Tensor<T>) -> Option<(Vec<usize>, T, T)> {
        if self.dims != other.dims {
            return Some((Vec::new(), T::zero(), T::zero()));
        }
        let pos = self.data.iter().zip(&other.data).position(|(a, b)| a != b)?;
        let mut rem = pos;
        let mut idx = vec![0; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            idx[axis] = rem % self.dims[axis];
            rem /= self.dims[axis];
        }
        Some((idx, self.data[pos], other.data[pos]))
    }

    /// Largest elementwise relative error, measured against `reference`.
    pub fn max_rel_error(&self, reference: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| {
                let (a, b) = (a.to_f64(), b.to_f64());
                (a - b).abs() / b.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }

    /// Header (magic, version, element type, rank, dims) followed by the
    /// little-endian payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + T::BYTES * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::KIND.code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            v.write_le(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |offset: usize, msg: &str| ModelError::Format {
            offset,
            message: msg.to_string(),
        };
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(bad(0, "missing tensor magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(bad(4, "unsupported tensor dump version"));
        }
        match ElemKind::from_code(bytes[6]) {
            Some(k) if k == T::KIND => {}
            _ => return Err(bad(6, "element type does not match the requested type")),
        }
        let rank = usize::from(bytes[7]);
        let mut pos = 8;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let chunk = bytes.get(pos..pos + 4).ok_or_else(|| bad(pos, "truncated dims"))?;
            dims.push(u32::from_le_bytes(chunk.try_into().unwrap()) as usize);
            pos += 4;
        }
        let len: usize = dims.iter().product();
        let payload = &bytes[pos..];
        if payload.len() != len * T::BYTES {
            return Err(bad(pos, "payload length does not match dims"));
        }
        let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
        Ok(Tensor { dims, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Fx16;

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn dump_round_trip_and_type_check() {
        let t = Tensor::<Fx16>::from_fn(&[2, 3, 4], |i| Fx16((i[0] * 100 + i[1] * 10 + i[2]) as i16 - 50));
        let bytes = t.to_bytes();
        assert_eq!(Tensor::<Fx16>::from_bytes(&bytes).unwrap(), t);
        assert!(Tensor::<f32>::from_bytes(&bytes).is_err());
        assert!(Tensor::<Fx16>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn row_major_layout() {
        let t = Tensor::<f32>::from_fn(&[2, 2, 3], |i| (i[0] * 6 + i[1] * 3 + i[2]) as f32);
        assert_eq!(t.data(), &[0., 1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11.]);
        assert_eq!(t.row(1, 0), &[6., 7., 8.]);
    }

    #[test]
    fn mismatch_reports_index() {
        let a = Tensor::<f32>::zeros(&[1, 2, 2]);
        let mut b = a.clone();
        b.set(&[0, 1, 0], 1.0);
        assert_eq!(a.first_mismatch(&b).unwrap().0, vec![0, 1, 0]);
    }
}
