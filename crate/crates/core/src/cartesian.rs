//! Lifting a per-position feature sequence to a pair tensor.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// `L x n` features: one row of `n` features per sequence position.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceFeatures {
    x: DenseTensor,
}

impl SequenceFeatures {
    pub fn new(x: DenseTensor) -> Result<Self> {
        match x.shape() {
            [_, _] => Ok(SequenceFeatures { x }),
            s => Err(Error::shape(format!("sequence features must be L x n, got {s:?}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.x.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn width(&self) -> usize {
        self.x.shape()[1]
    }

    /// Features of position `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.width();
        &self.x.data()[i * n..(i + 1) * n]
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.x
    }
}

/// `y[i, j, :] = concat(x[i, :], x[j, :])`, shape `L x L x 2n`.
///
/// The row position's features come first. Symmetry-generating layers rely on
/// exactly this ordering.
pub fn self_cartesian(x: &SequenceFeatures) -> DenseTensor {
    let (l, n) = (x.len(), x.width());
    let mut y = Vec::with_capacity(l * l * 2 * n);
    for i in 0..l {
        for j in 0..l {
            y.extend_from_slice(x.row(i));
            y.extend_from_slice(x.row(j));
        }
    }
    DenseTensor::from_vec(&[l, l, 2 * n], y).expect("extents are positive")
}

/// Largest violation of the channel-half swap `y[i, j, :n] == y[j, i, n:]`
/// (and vice versa). Zero for any output of [`self_cartesian`].
pub fn pair_swap_check(y: &DenseTensor) -> Result<f64> {
    let (l, c) = y.pair_dims()?;
    if c % 2 != 0 {
        return Err(Error::shape(format!("channel count {c} is odd")));
    }
    let n = c / 2;
    let d = y.data();
    let mut worst = 0.0f64;
    for i in 0..l {
        for j in 0..l {
            let a = &d[(i * l + j) * c..][..c];
            let b = &d[(j * l + i) * c..][..c];
            for k in 0..n {
                worst = worst.max((a[k] - b[k + n]).abs()).max((a[k + n] - b[k]).abs());
            }
        }
    }
    Ok(worst)
}
