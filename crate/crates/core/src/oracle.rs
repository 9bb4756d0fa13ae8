//! Deliberately naive reference implementations.
//!
//! Nothing here calls into `conv`, `symkernel` expansion/folding, or `packed`
//! kernels on the path being checked; the loops are written out directly
//! against the index formulas so a shared bug cannot hide on both sides.

use crate::error::{Error, Result};
use crate::symkernel::{SymGenKernel, SymPresKernel};
use crate::tensor::{DenseTensor, Rng};

/// Central-difference settings and the comparison tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdSpec {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec { step: 1e-6, rel_tol: 1e-5, abs_floor: 1e-8 }
    }
}

impl FdSpec {
    /// Worst relative error between two gradients. Entries whose absolute
    /// difference is within `abs_floor` count as exact.
    pub fn worst_rel_err(&self, analytic: &DenseTensor, numeric: &DenseTensor) -> Result<f64> {
        analytic.same_shape(numeric)?;
        let mut worst = 0.0f64;
        for (&a, &b) in analytic.data().iter().zip(numeric.data()) {
            let diff = (a - b).abs();
            if diff <= self.abs_floor {
                continue;
            }
            worst = worst.max(diff / a.abs().max(b.abs()));
        }
        Ok(worst)
    }

    /// Errors with the worst entry if it exceeds `tol`.
    pub fn assert_close(&self, analytic: &DenseTensor, numeric: &DenseTensor, tol: f64) -> Result<f64> {
        let worst = self.worst_rel_err(analytic, numeric)?;
        if worst > tol {
            return Err(Error::Oracle(format!("gradient mismatch: worst relative error {worst:e} > {tol:e}")));
        }
        Ok(worst)
    }
}

/// Central differences `(f(p + h e_i) - f(p - h e_i)) / 2h`, one coordinate at a time.
pub fn fd_gradient<F>(mut loss: F, params: &DenseTensor, spec: &FdSpec) -> Result<DenseTensor>
where
    F: FnMut(&DenseTensor) -> Result<f64>,
{
    if spec.step.is_nan() || spec.step <= 0.0 {
        return Err(Error::Oracle(format!("finite-difference step must be positive, got {}", spec.step)));
    }
    let h = spec.step;
    let mut probe = params.clone();
    let mut grad = DenseTensor::zeros(params.shape())?;
    for idx in 0..params.len() {
        let orig = params.data()[idx];
        probe.data_mut()[idx] = orig + h;
        let up = loss(&probe)?;
        probe.data_mut()[idx] = orig - h;
        let down = loss(&probe)?;
        probe.data_mut()[idx] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Oracle(format!("non-finite loss while perturbing coordinate {idx}")));
        }
        grad.data_mut()[idx] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Same-padded cross-correlation as explicit nested loops over signed indices.
pub fn naive_conv2d(input: &DenseTensor, weights: &DenseTensor, bias: &DenseTensor) -> Result<DenseTensor> {
    let [l, l2, cin] = input.shape()[..] else {
        return Err(Error::Shape(format!("input must be rank 3, got {:?}", input.shape())));
    };
    let [c, c2, kin, f] = weights.shape()[..] else {
        return Err(Error::Shape(format!("weights must be rank 4, got {:?}", weights.shape())));
    };
    if l != l2 || c != c2 || kin != cin || bias.shape() != [f] || c % 2 == 0 {
        return Err(Error::Shape(format!(
            "incompatible shapes: input {:?}, weights {:?}, bias {:?}",
            input.shape(),
            weights.shape(),
            bias.shape()
        )));
    }
    let half = (c as isize - 1) / 2;
    let mut out = DenseTensor::zeros(&[l, l, f])?;
    for s in 0..l as isize {
        for t in 0..l as isize {
            for ff in 0..f {
                let mut acc = bias.get(&[ff]);
                for i in 0..c as isize {
                    for j in 0..c as isize {
                        let a = s + i - half;
                        let b = t + j - half;
                        if a < 0 || b < 0 || a >= l as isize || b >= l as isize {
                            continue;
                        }
                        for k in 0..cin {
                            acc += weights.get(&[i as usize, j as usize, k, ff])
                                * input.get(&[a as usize, b as usize, k]);
                        }
                    }
                }
                out.set(&[s as usize, t as usize, ff], acc);
            }
        }
    }
    Ok(out)
}

/// Which packed parameterization to count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Generating,
    Preserving,
}

/// Builds a packed kernel of the requested kind and counts, by enumeration,
/// its stored scalars and the scalars of its expansion.
pub fn brute_force_expand_count(kind: KernelKind, size: usize, channels: usize, out: usize) -> Result<(usize, usize)> {
    let mut rng = Rng::new(0);
    let (stored, full) = match kind {
        KernelKind::Generating => {
            let k = SymGenKernel::random(size, channels, out, 1.0, &mut rng)?;
            (k.packed().data().iter().count(), k.expand().weights().data().iter().count())
        }
        KernelKind::Preserving => {
            let k = SymPresKernel::random(size, channels, out, 1.0, &mut rng)?;
            (k.packed().data().iter().count(), k.expand().weights().data().iter().count())
        }
    };
    Ok((stored, full))
}

/// `i >= j` lookup into a packed kernel, written without the shared
/// triangle-index helper: walk the lower triangle row by row.
pub fn naive_lower_index(i: usize, j: usize) -> usize {
    let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
    let mut pos = 0;
    for r in 0..hi {
        pos += r + 1;
    }
    pos + lo
}
