//! Dense channels-first tensors.
//!
//! Images are laid out `[batch, channels, height, width]`. Values default to
//! `f32`; `f64` tensors exist for finite-difference gradient checks.

use std::fmt::Debug;
use std::io::{Read, Write};

use num_traits::{Float, NumAssign};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Floating point element type of a tensor.
pub trait Scalar: Float + NumAssign + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// `c = op(a) * op(b) + (c if accumulate else 0)` for row-major
    /// matrices. `op(a)` is `m x k`, `op(b)` is `k x n`; a transposed operand
    /// is stored with its dimensions swapped.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_trans: bool,
        b: &[Self],
        b_trans: bool,
        c: &mut [Self],
        accumulate: bool,
    );
}

fn gemm_strides(rows: usize, cols: usize, trans: bool) -> (isize, isize) {
    // Row and column strides of op(x) given x stored row-major.
    if trans {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            fn to_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_trans: bool,
                b: &[Self],
                b_trans: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert_eq!(a.len(), m * k, "gemm: lhs length");
                assert_eq!(b.len(), k * n, "gemm: rhs length");
                assert_eq!(c.len(), m * n, "gemm: output length");
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if !accumulate {
                        c.fill(0.0);
                    }
                    return;
                }
                let (rsa, csa) = gemm_strides(m, k, a_trans);
                let (rsb, csb) = gemm_strides(k, n, b_trans);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: lengths are checked above and the strides describe
                // in-bounds row-major (or transposed) layouts of those slices.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

/// How to fill a freshly allocated tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Constant(f64),
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Allocate a tensor. Random initializers draw from `rng` in row-major
    /// order; deterministic ones ignore it.
    pub fn alloc(shape: &[usize], init: Init, rng: &mut Rng) -> Result<Self> {
        let len = checked_len(shape)?;
        let data = match init {
            Init::Zeros => vec![T::zero(); len],
            Init::Constant(v) => vec![T::from_f64(v); len],
            Init::Normal { mean, std } => (0..len).map(|_| T::from_f64(rng.normal(mean, std))).collect(),
            Init::Uniform { lo, hi } => (0..len).map(|_| T::from_f64(rng.uniform(lo, hi))).collect(),
        };
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![v; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = checked_len(shape)?;
        if len != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {len} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "expected a scalar, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let len = checked_len(shape)?;
        if len != self.data.len() {
            return Err(Error::InvalidShape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Extents of a rank-4 image tensor.
    pub fn dims4(&self) -> Result<[usize; 4]> {
        match self.shape[..] {
            [b, c, h, w] => Ok([b, c, h, w]),
            _ => Err(Error::Shape(format!(
                "expected [batch, channels, height, width], got {:?}",
                self.shape
            ))),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::from_f64(self.data.len() as f64)
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.expect_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.to_f64() * b.to_f64())
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.expect_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn min_max(&self) -> (T, T) {
        let mut lo = self.data[0];
        let mut hi = self.data[0];
        for &v in &self.data {
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        (lo, hi)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Channels `range` of a rank-4 tensor.
    pub fn slice_channels(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let [b, c, h, w] = self.dims4()?;
        if range.start > range.end || range.end > c {
            return Err(Error::Shape(format!(
                "channel range {range:?} out of bounds for {c} channels"
            )));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(b * range.len() * plane);
        for bi in 0..b {
            let start = (bi * c + range.start) * plane;
            data.extend_from_slice(&self.data[start..start + range.len() * plane]);
        }
        Ok(Self {
            shape: vec![b, range.len(), h, w],
            data,
        })
    }

    /// Batch element `index` of a rank-4 tensor, keeping a batch axis of 1.
    pub fn batch_item(&self, index: usize) -> Result<Self> {
        let [b, c, h, w] = self.dims4()?;
        if index >= b {
            return Err(Error::Shape(format!("batch index {index} out of {b}")));
        }
        let n = c * h * w;
        Ok(Self {
            shape: vec![1, c, h, w],
            data: self.data[index * n..(index + 1) * n].to_vec(),
        })
    }

    /// Stack equally shaped tensors along a new leading axis, or along the
    /// existing batch axis when each has a leading extent of 1.
    pub fn stack_batch(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidShape("cannot stack zero tensors".into()))?;
        let mut shape = first.shape.clone();
        if shape.len() == 4 && shape[0] == 1 {
            shape[0] = items.len();
        } else {
            shape.insert(0, items.len());
        }
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.expect_same_shape(t)?;
            data.extend_from_slice(&t.data);
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn expect_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape(format!(
            "extents must all be at least 1, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

pub const TENSOR_MAGIC: &[u8; 4] = b"TFTN";
pub const TENSOR_VERSION: u16 = 1;

impl Tensor<f32> {
    /// Serialize as `TFTN`, version, rank, u64 extents, then f32 values, all
    /// little-endian.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(TENSOR_MAGIC)?;
        w.write_all(&TENSOR_VERSION.to_le_bytes())?;
        w.write_all(&(self.shape.len() as u16).to_le_bytes())?;
        for &e in &self.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 8 * self.shape.len() + 4 * self.data.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let corrupt = |what: &str| Error::Corruption(format!("tensor record: {what}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated magic"))?;
        if &magic != TENSOR_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut two = [0u8; 2];
        r.read_exact(&mut two).map_err(|_| corrupt("truncated version"))?;
        let version = u16::from_le_bytes(two);
        if version != TENSOR_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        r.read_exact(&mut two).map_err(|_| corrupt("truncated rank"))?;
        let rank = u16::from_le_bytes(two) as usize;
        if rank == 0 {
            return Err(corrupt("rank 0"));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut eight = [0u8; 8];
        for _ in 0..rank {
            r.read_exact(&mut eight).map_err(|_| corrupt("truncated extents"))?;
            let e = u64::from_le_bytes(eight);
            if e == 0 || e > u32::MAX as u64 {
                return Err(corrupt(&format!("implausible extent {e}")));
            }
            shape.push(e as usize);
        }
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&n| n <= 1 << 31)
            .ok_or_else(|| corrupt("element count overflow"))?;
        let mut bytes = vec![0u8; len * 4];
        r.read_exact(&mut bytes).map_err(|_| corrupt("truncated values"))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { shape, data })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alloc_zeros_and_constant() {
        let mut rng = Rng::new(0);
        let z = Tensor::<f32>::alloc(&[2, 2], Init::Zeros, &mut rng).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
        let c = Tensor::<f32>::alloc(&[3], Init::Constant(1.5), &mut rng).unwrap();
        assert_eq!(c.data(), &[1.5, 1.5, 1.5]);
    }

    #[test]
    fn alloc_rejects_zero_extent() {
        let mut rng = Rng::new(0);
        assert!(matches!(
            Tensor::<f32>::alloc(&[2, 0], Init::Zeros, &mut rng),
            Err(Error::InvalidShape(_))
        ));
        assert!(Tensor::<f32>::alloc(&[], Init::Zeros, &mut rng).is_err());
    }

    #[test]
    fn normal_alloc_statistics() {
        let mut rng = Rng::new(7);
        let t = Tensor::<f64>::alloc(&[10_000], Init::Normal { mean: 0.0, std: 1.0 }, &mut rng)
            .unwrap();
        // Recompute the statistic from the raw stream.
        let mut replay = Rng::new(7);
        let stream_mean: f64 = (0..10_000).map(|_| replay.normal(0.0, 1.0)).sum::<f64>() / 1e4;
        assert_eq!(t.mean(), stream_mean);
        assert!(stream_mean.abs() < 0.05, "{stream_mean}");
    }

    #[test]
    fn alloc_is_deterministic() {
        let init = Init::Uniform { lo: -1.0, hi: 1.0 };
        let a = Tensor::<f32>::alloc(&[4, 5], init, &mut Rng::new(3)).unwrap();
        let b = Tensor::<f32>::alloc(&[4, 5], init, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn serialization_layout() {
        let t = Tensor::from_vec(&[1, 2], vec![1.0f32, -2.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"TFTN");
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
        assert_eq!(&bytes[6..8], &2u16.to_le_bytes());
        assert_eq!(&bytes[8..16], &1u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &2u64.to_le_bytes());
        assert_eq!(&bytes[24..28], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 32);
        let back = Tensor::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn truncated_record_is_corruption() {
        let bytes = Tensor::from_vec(&[4], vec![1.0f32; 4]).unwrap().to_bytes();
        let err = Tensor::read_from(&mut &bytes[..bytes.len() - 1]).unwrap_err();
        assert!(matches!(err, Error::Corruption(_)));
    }

    #[test]
    fn slice_channels_and_stack() {
        let t = Tensor::from_vec(&[2, 3, 1, 1], vec![0.0f32, 1., 2., 3., 4., 5.]).unwrap();
        let s = t.slice_channels(1..3).unwrap();
        assert_eq!(s.shape(), &[2, 2, 1, 1]);
        assert_eq!(s.data(), &[1., 2., 4., 5.]);
        let items = [t.batch_item(1).unwrap(), t.batch_item(0).unwrap()];
        let stacked = Tensor::stack_batch(&items).unwrap();
        assert_eq!(stacked.data(), &[3., 4., 5., 0., 1., 2.]);
    }

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0f64, 2., 3., 4.];
        let b = [5.0f64, 6., 7., 8.];
        let mut c = [0.0f64; 4];
        f64::gemm(2, 2, 2, &a, false, &b, false, &mut c, false);
        assert_eq!(c, [19., 22., 43., 50.]);
        f64::gemm(2, 2, 2, &a, true, &b, false, &mut c, false);
        assert_eq!(c, [26., 30., 38., 44.]);
        f64::gemm(2, 2, 2, &a, false, &b, true, &mut c, true);
        assert_eq!(c, [26. + 17., 30. + 23., 38. + 39., 44. + 53.]);
    }
}
