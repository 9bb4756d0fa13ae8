//! Dense row-major tensors, the SCT1 binary format and the deterministic RNG.
//!
//! Layout is fixed globally: row-major with the last axis fastest. Pair
//! tensors are `L x L x c`, so the channel fiber at `(i, j)` is contiguous.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("empty shape list"));
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return Err(Error::shape(format!("zero extent on axis {pos} of {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(DenseTensor { shape: shape.to_vec(), data: vec![0.0; len] })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if data.len() != len {
            return Err(Error::shape(format!(
                "data length {} does not match shape {shape:?} ({len} entries)",
                data.len()
            )));
        }
        Ok(DenseTensor { shape: shape.to_vec(), data })
    }

    /// Builds a tensor by evaluating `f` at every flat offset.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(DenseTensor { shape: shape.to_vec(), data: (0..len).map(f).collect() })
    }

    /// Entries drawn uniformly from the open interval `(-bound, bound)`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut Rng) -> Result<Self> {
        Self::from_fn(shape, |_| bound * rng.next_symmetric())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a multi-index. Panics on rank or bound violations.
    pub fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &e)| {
            assert!(i < e, "index {index:?} out of bounds for shape {:?}", self.shape);
            acc * e + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(DenseTensor { shape: self.shape.clone(), data })
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Extents `(L, c)` of a pair tensor `L x L x c`.
    pub fn pair_dims(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [l, l2, c] if l == l2 => Ok((l, c)),
            _ => Err(Error::shape(format!(
                "expected a square pair tensor L x L x c, got {:?}",
                self.shape
            ))),
        }
    }

    /// `o[i, j, k] = t[j, i, k]`
    pub fn transpose_spatial(&self) -> Result<Self> {
        let (l, c) = self.pair_dims()?;
        let mut out = vec![0.0; self.data.len()];
        for i in 0..l {
            for j in 0..l {
                let src = (j * l + i) * c;
                let dst = (i * l + j) * c;
                out[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        Ok(DenseTensor { shape: self.shape.clone(), data: out })
    }

    /// `max |t[i, j, :] - t[j, i, :]|` over a pair tensor.
    pub fn asymmetry(&self) -> Result<f64> {
        let (l, c) = self.pair_dims()?;
        let mut worst = 0.0f64;
        for i in 0..l {
            for j in (i + 1)..l {
                let a = &self.data[(i * l + j) * c..][..c];
                let b = &self.data[(j * l + i) * c..][..c];
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
        Ok(worst)
    }

    pub fn write_sct1<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(SCT1_MAGIC)?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &e in &self.shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_sct1<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SCT1_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected SCT1")));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let rank = u32::from_le_bytes(b4) as usize;
        if rank == 0 || rank > 16 {
            return Err(Error::Format(format!("unsupported rank {rank}")));
        }
        let mut b8 = [0u8; 8];
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            r.read_exact(&mut b8)?;
            let e = u64::from_le_bytes(b8);
            shape.push(usize::try_from(e).map_err(|_| Error::Format(format!("extent {e} too large")))?);
        }
        let len = check_shape(&shape)?;
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after tensor data".into()));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_sct1(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_sct1(BufReader::new(File::open(path)?))
    }
}

pub const SCT1_MAGIC: &[u8; 4] = b"SCT1";

/// An `L x L x c` feature map. `symmetric` is set only after the spatial
/// symmetry `z[i, j, :] == z[j, i, :]` has been verified (or holds by
/// construction of a symmetric layer).
#[derive(Clone, Debug, PartialEq)]
pub struct PairTensor {
    tensor: DenseTensor,
    symmetric: bool,
}

impl PairTensor {
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        tensor.pair_dims()?;
        Ok(PairTensor { tensor, symmetric: false })
    }

    /// Wraps `tensor` after checking its asymmetry is within `tol`.
    pub fn symmetric(tensor: DenseTensor, tol: f64) -> Result<Self> {
        let asym = tensor.asymmetry()?;
        if asym > tol {
            return Err(Error::Precondition(format!("pair tensor asymmetry {asym:e} exceeds {tol:e}")));
        }
        Ok(PairTensor { tensor, symmetric: true })
    }

    pub(crate) fn assume_symmetric(tensor: DenseTensor) -> Self {
        PairTensor { tensor, symmetric: true }
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn size(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[2]
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }
}

/// Seeded ChaCha8 stream. ChaCha is counter-based, so a draw sequence depends
/// only on the seed and is identical on every platform.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this generator's seed and `stream`.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Rng { seed: self.seed, inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in the open interval `(0, 1)`.
    pub fn next_open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the open interval `(-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_open01() - 1.0
    }

    /// Uniform integer in `0..bound` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, bound: usize) -> usize {
        assert!(bound > 0, "below(0)");
        let bound = bound as u64;
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use super::Rng;

    #[test]
    fn zeros_shapes() {
        let t = DenseTensor::zeros(&[2, 3]).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert!(t.data().iter().all(|&v| v == 0.0));
        assert_eq!(DenseTensor::zeros(&[1]).unwrap().data(), &[0.0]);
        assert_eq!(DenseTensor::zeros(&[2, 2, 4]).unwrap().len(), 16);
    }

    #[test]
    fn zeros_rejects_bad_shapes() {
        assert!(matches!(DenseTensor::zeros(&[]), Err(Error::Shape(_))));
        assert!(matches!(DenseTensor::zeros(&[3, 0]), Err(Error::Shape(_))));
    }

    #[test]
    fn transpose_cases() {
        let mut rng = Rng::new(1);
        let one = DenseTensor::uniform(&[1, 1, 3], 1.0, &mut rng).unwrap();
        assert_eq!(one.transpose_spatial().unwrap(), one);

        let mut t = DenseTensor::zeros(&[2, 2, 2]).unwrap();
        t.set(&[0, 1, 0], 1.0);
        t.set(&[0, 1, 1], 2.0);
        t.set(&[1, 0, 0], 3.0);
        t.set(&[1, 0, 1], 4.0);
        let o = t.transpose_spatial().unwrap();
        assert_eq!((o.get(&[0, 1, 0]), o.get(&[0, 1, 1])), (3.0, 4.0));
        assert_eq!((o.get(&[1, 0, 0]), o.get(&[1, 0, 1])), (1.0, 2.0));

        let r = DenseTensor::uniform(&[5, 5, 3], 1.0, &mut rng).unwrap();
        assert_eq!(r.transpose_spatial().unwrap().transpose_spatial().unwrap(), r);
        assert!(r.transpose_spatial().unwrap().max_abs_diff(&r).unwrap() > 0.0);
    }

    #[test]
    fn transpose_rejects_non_square() {
        let t = DenseTensor::zeros(&[2, 3, 1]).unwrap();
        assert!(matches!(t.transpose_spatial(), Err(Error::Shape(_))));
    }

    #[test]
    fn max_abs_diff_cases() {
        let a = DenseTensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let b = DenseTensor::from_vec(&[2], vec![1.0, 5.0]).unwrap();
        assert_eq!(a.max_abs_diff(&a).unwrap(), 0.0);
        assert_eq!(a.max_abs_diff(&b).unwrap(), 3.0);
        let c = DenseTensor::zeros(&[3]).unwrap();
        assert!(matches!(a.max_abs_diff(&c), Err(Error::Shape(_))));

        let mut rng = Rng::new(9);
        let x = DenseTensor::uniform(&[4, 3, 2], 5.0, &mut rng).unwrap();
        let y = DenseTensor::uniform(&[4, 3, 2], 5.0, &mut rng).unwrap();
        let mut oracle = 0.0f64;
        for i in 0..4 {
            for j in 0..3 {
                for k in 0..2 {
                    let d = (x.get(&[i, j, k]) - y.get(&[i, j, k])).abs();
                    if d > oracle {
                        oracle = d;
                    }
                }
            }
        }
        assert_eq!(x.max_abs_diff(&y).unwrap(), oracle);
    }

    #[test]
    fn rng_reproducible() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut c = Rng::new(43);
        assert_ne!(Rng::new(42).next_u64(), c.next_u64());
    }

    #[test]
    fn rng_open_interval() {
        let mut r = Rng::new(3);
        for _ in 0..10_000 {
            let v = r.next_symmetric();
            assert!(v > -1.0 && v < 1.0);
            let u = r.below(7);
            assert!(u < 7);
        }
    }

    #[test]
    fn forks_are_distinct_and_stable() {
        let base = Rng::new(5);
        let a: Vec<u64> = (0..4).map({
            let mut f = base.fork(1);
            move |_| f.next_u64()
        }).collect();
        let b: Vec<u64> = (0..4).map({
            let mut f = base.fork(1);
            move |_| f.next_u64()
        }).collect();
        let mut other = base.fork(2);
        assert_eq!(a, b);
        assert_ne!(a[0], other.next_u64());
    }

    #[test]
    fn sct1_layout_is_bit_exact() {
        let t = DenseTensor::from_vec(&[1, 2], vec![1.5, -0.0]).unwrap();
        let mut buf = Vec::new();
        t.write_sct1(&mut buf).unwrap();
        let mut expected = b"SCT1".to_vec();
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.extend_from_slice(&2u64.to_le_bytes());
        expected.extend_from_slice(&1.5f64.to_le_bytes());
        expected.extend_from_slice(&(-0.0f64).to_le_bytes());
        assert_eq!(buf, expected);
    }

    #[test]
    fn sct1_rejects_garbage() {
        assert!(matches!(DenseTensor::read_sct1(&b"SCT2\x01\0\0\0"[..]), Err(Error::Format(_))));
        let mut buf = Vec::new();
        DenseTensor::zeros(&[2]).unwrap().write_sct1(&mut buf).unwrap();
        buf.push(0);
        assert!(matches!(DenseTensor::read_sct1(&buf[..]), Err(Error::Format(_))));
        assert!(DenseTensor::read_sct1(&buf[..buf.len() - 3]).is_err());
    }

    fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..=6, 1..=4)
    }

    proptest! {
        #[test]
        fn flatten_reshape_identity(shape in shape_strategy(), seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let t = DenseTensor::uniform(&shape, 1.0, &mut rng).unwrap();
            let n = t.len();
            let back = t.clone().reshape(&[n]).unwrap().reshape(&shape).unwrap();
            prop_assert_eq!(&back, &t);
            // row-major: the last axis is fastest
            let mut idx = vec![0; shape.len()];
            *idx.last_mut().unwrap() = shape[shape.len() - 1] - 1;
            prop_assert_eq!(t.offset(&idx), shape[shape.len() - 1] - 1);
        }

        #[test]
        fn sct1_round_trip(shape in shape_strategy(), seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let t = DenseTensor::uniform(&shape, 1e3, &mut rng).unwrap();
            let mut buf = Vec::new();
            t.write_sct1(&mut buf).unwrap();
            let back = DenseTensor::read_sct1(&buf[..]).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
