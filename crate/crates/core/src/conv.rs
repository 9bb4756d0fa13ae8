//! Unconstrained 2D convolution, activations and the upper-triangle loss.
//!
//! Convolution here is cross-correlation (no kernel flip), stride 1 with
//! "same" zero padding, so output spatial size equals input spatial size:
//!
//! ```text
//! out[s, t, f] = bias[f] + sum_{i, j, k} W[i, j, k, f] * in[s + i - p, t + j - p, k],   p = (C - 1) / 2
//! ```
//!
//! Kernel sizes must be odd. Only then is the padding itself invariant under
//! a spatial transpose, which the symmetric layers depend on.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{DenseTensor, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dKernel {
    weights: DenseTensor,
    bias: DenseTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrads {
    pub d_weights: DenseTensor,
    pub d_bias: DenseTensor,
    pub d_input: DenseTensor,
}

impl Conv2dKernel {
    /// `weights` is `C x C x c_in x F`, `bias` is `F`.
    pub fn new(weights: DenseTensor, bias: DenseTensor) -> Result<Self> {
        let (c, c2, _, f) = match weights.shape()[..] {
            [a, b, k, f] => (a, b, k, f),
            _ => return Err(Error::shape(format!("kernel must be rank 4, got {:?}", weights.shape()))),
        };
        if c != c2 {
            return Err(Error::shape(format!("kernel must be square, got {:?}", weights.shape())));
        }
        if c % 2 == 0 {
            return Err(Error::config(format!("kernel size must be odd, got {c}")));
        }
        if bias.shape() != [f] {
            return Err(Error::shape(format!("bias shape {:?} does not match F = {f}", bias.shape())));
        }
        Ok(Conv2dKernel { weights, bias })
    }

    pub fn zero_bias(weights: DenseTensor) -> Result<Self> {
        let f = *weights.shape().last().unwrap_or(&1);
        Self::new(weights, DenseTensor::zeros(&[f])?)
    }

    /// Glorot-uniform weights and zero bias.
    pub fn glorot(size: usize, in_channels: usize, out_channels: usize, rng: &mut Rng) -> Result<Self> {
        let fan_in = size * size * in_channels;
        let fan_out = size * size * out_channels;
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = DenseTensor::uniform(&[size, size, in_channels, out_channels], bound, rng)?;
        Self::zero_bias(w)
    }

    pub fn weights(&self) -> &DenseTensor {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut DenseTensor {
        &mut self.weights
    }

    pub fn bias(&self) -> &DenseTensor {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut DenseTensor {
        &mut self.bias
    }

    pub fn weights_and_bias_mut(&mut self) -> (&mut DenseTensor, &mut DenseTensor) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn size(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[3]
    }

    fn check_input(&self, input: &DenseTensor) -> Result<(usize, usize)> {
        let (l, c) = input.pair_dims()?;
        if c != self.in_channels() {
            return Err(Error::shape(format!(
                "input has {c} channels, kernel expects {}",
                self.in_channels()
            )));
        }
        Ok((l, c))
    }
}

/// Same-padded cross-correlation of an `L x L x c_in` input.
pub fn conv2d_forward(input: &DenseTensor, kernel: &Conv2dKernel) -> Result<DenseTensor> {
    conv2d_forward_counted(input, kernel).map(|(out, _)| out)
}

/// As [`conv2d_forward`], also returning the number of multiply-accumulates
/// actually executed (taps that fall on the zero padding are skipped).
pub fn conv2d_forward_counted(input: &DenseTensor, kernel: &Conv2dKernel) -> Result<(DenseTensor, u64)> {
    let (l, cin) = kernel.check_input(input)?;
    let c = kernel.size();
    let f = kernel.out_channels();
    let p = c / 2;
    let x = input.data();
    let w = kernel.weights.data();
    let bias = kernel.bias.data();

    let macs = AtomicU64::new(0);
    let mut out = vec![0.0; l * l * f];
    par::for_each_row(&mut out, l * f, |s, row| {
        let mut row_macs = 0u64;
        for t in 0..l {
            let acc = &mut row[t * f..(t + 1) * f];
            acc.copy_from_slice(bias);
            for i in 0..c {
                let Some(a) = (s + i).checked_sub(p).filter(|&a| a < l) else { continue };
                for j in 0..c {
                    let Some(b) = (t + j).checked_sub(p).filter(|&b| b < l) else { continue };
                    let fiber = &x[(a * l + b) * cin..][..cin];
                    let taps = &w[(i * c + j) * cin * f..][..cin * f];
                    for (v, wk) in fiber.iter().zip(taps.chunks_exact(f)) {
                        for (o, wf) in acc.iter_mut().zip(wk) {
                            *o += v * wf;
                        }
                    }
                    row_macs += (cin * f) as u64;
                }
            }
        }
        macs.fetch_add(row_macs, Ordering::Relaxed);
    });
    Ok((DenseTensor::from_vec(&[l, l, f], out)?, macs.into_inner()))
}

/// Number of in-range taps per axis for an output coordinate `s`.
pub(crate) fn valid_taps(s: usize, l: usize, c: usize) -> u64 {
    let p = c / 2;
    (0..c).filter(|&i| (s + i).checked_sub(p).is_some_and(|a| a < l)).count() as u64
}

/// Closed-form multiply-accumulate count of the full-map forward pass.
pub fn full_mac_count(l: usize, c: usize, cin: usize, f: usize) -> u64 {
    let per_axis: u64 = (0..l).map(|s| valid_taps(s, l, c)).sum();
    per_axis * per_axis * (cin * f) as u64
}

/// Gradients of a scalar loss with respect to weights, bias and input, given
/// `upstream = dL/d(out)`.
pub fn conv2d_backward(input: &DenseTensor, kernel: &Conv2dKernel, upstream: &DenseTensor) -> Result<ConvGrads> {
    let (l, cin) = kernel.check_input(input)?;
    let c = kernel.size();
    let f = kernel.out_channels();
    if upstream.shape() != [l, l, f] {
        return Err(Error::shape(format!(
            "upstream shape {:?} does not match output {:?}",
            upstream.shape(),
            [l, l, f]
        )));
    }
    let p = c / 2;
    let x = input.data();
    let w = kernel.weights.data();
    let g = upstream.data();

    // d_input[a, b, k] = sum_{i, j, f} W[i, j, k, f] * g[a - i + p, b - j + p, f]
    let mut d_input = vec![0.0; l * l * cin];
    par::for_each_row(&mut d_input, l * cin, |a, row| {
        for b in 0..l {
            let acc = &mut row[b * cin..(b + 1) * cin];
            for i in 0..c {
                let Some(s) = (a + p).checked_sub(i).filter(|&s| s < l) else { continue };
                for j in 0..c {
                    let Some(t) = (b + p).checked_sub(j).filter(|&t| t < l) else { continue };
                    let gf = &g[(s * l + t) * f..][..f];
                    let taps = &w[(i * c + j) * cin * f..][..cin * f];
                    for (o, wk) in acc.iter_mut().zip(taps.chunks_exact(f)) {
                        *o += wk.iter().zip(gf).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        }
    });

    // d_W[i, j, k, f] = sum_{s, t} in[s + i - p, t + j - p, k] * g[s, t, f]
    let mut d_w = vec![0.0; c * c * cin * f];
    par::for_each_row(&mut d_w, cin * f, |ij, block| {
        let (i, j) = (ij / c, ij % c);
        for s in 0..l {
            let Some(a) = (s + i).checked_sub(p).filter(|&a| a < l) else { continue };
            for t in 0..l {
                let Some(b) = (t + j).checked_sub(p).filter(|&b| b < l) else { continue };
                let fiber = &x[(a * l + b) * cin..][..cin];
                let gf = &g[(s * l + t) * f..][..f];
                for (v, dk) in fiber.iter().zip(block.chunks_exact_mut(f)) {
                    for (d, gv) in dk.iter_mut().zip(gf) {
                        *d += v * gv;
                    }
                }
            }
        }
    });

    let mut d_bias = vec![0.0; f];
    for gf in g.chunks_exact(f) {
        for (d, v) in d_bias.iter_mut().zip(gf) {
            *d += v;
        }
    }

    Ok(ConvGrads {
        d_weights: DenseTensor::from_vec(&[c, c, cin, f], d_w)?,
        d_bias: DenseTensor::from_vec(&[f], d_bias)?,
        d_input: DenseTensor::from_vec(&[l, l, cin], d_input)?,
    })
}

pub fn relu_forward(x: &DenseTensor) -> DenseTensor {
    x.map(|v| v.max(0.0))
}

/// Chain rule through ReLU; the derivative at exactly 0 is taken as 0.
pub fn relu_backward(input: &DenseTensor, upstream: &DenseTensor) -> Result<DenseTensor> {
    input.zip_map(upstream, |x, g| if x > 0.0 { g } else { 0.0 })
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_forward(x: &DenseTensor) -> DenseTensor {
    x.map(sigmoid)
}

/// Chain rule through the sigmoid, given its forward *output*.
pub fn sigmoid_backward(output: &DenseTensor, upstream: &DenseTensor) -> Result<DenseTensor> {
    output.zip_map(upstream, |y, g| g * y * (1.0 - y))
}

/// Weighted binary cross-entropy over the upper triangle `j - i >= max(1, min_sep)`.
///
/// `pred` and `label` are `L x L` (or `L x L x 1`). Returns the mean loss over
/// included entries and its gradient with respect to `pred`, which is zero
/// on the diagonal and below it.
pub fn weighted_bce_upper(
    pred: &DenseTensor,
    label: &DenseTensor,
    pos_weight: f64,
    min_sep: usize,
) -> Result<(f64, DenseTensor)> {
    let l = square_extent(pred)?;
    weighted_bce_upper_masked(pred, label, pos_weight, min_sep, l)
}

/// As [`weighted_bce_upper`], restricted to the leading `valid x valid`
/// block. Entries outside it (batch padding) contribute nothing.
pub fn weighted_bce_upper_masked(
    pred: &DenseTensor,
    label: &DenseTensor,
    pos_weight: f64,
    min_sep: usize,
    valid: usize,
) -> Result<(f64, DenseTensor)> {
    let l = square_extent(pred)?;
    if square_extent(label)? != l || label.len() != pred.len() {
        return Err(Error::shape(format!(
            "label shape {:?} does not match prediction {:?}",
            label.shape(),
            pred.shape()
        )));
    }
    if valid > l {
        return Err(Error::shape(format!("valid length {valid} exceeds L = {l}")));
    }
    if !(pos_weight > 0.0 && pos_weight.is_finite()) {
        return Err(Error::Domain(format!("pos_weight must be positive, got {pos_weight}")));
    }
    let sep = min_sep.max(1);
    let p = pred.data();
    let y = label.data();

    let mut count = 0usize;
    for i in 0..valid {
        for j in (i + sep)..valid {
            let o = i * l + j;
            if !(p[o] > 0.0 && p[o] < 1.0) {
                return Err(Error::Domain(format!("prediction {} at ({i}, {j}) outside (0, 1)", p[o])));
            }
            if y[o] != 0.0 && y[o] != 1.0 {
                return Err(Error::Domain(format!("label {} at ({i}, {j}) is not binary", y[o])));
            }
            count += 1;
        }
    }
    let mut grad = DenseTensor::zeros(pred.shape())?;
    if count == 0 {
        return Ok((0.0, grad));
    }
    let inv_m = 1.0 / count as f64;
    let mut total = 0.0;
    let d = grad.data_mut();
    for i in 0..valid {
        for j in (i + sep)..valid {
            let o = i * l + j;
            let (pv, yv) = (p[o], y[o]);
            total += pos_weight * yv * pv.ln() + (1.0 - yv) * (1.0 - pv).ln();
            d[o] = -inv_m * (pos_weight * yv / pv - (1.0 - yv) / (1.0 - pv));
        }
    }
    Ok((-total * inv_m, grad))
}

fn square_extent(t: &DenseTensor) -> Result<usize> {
    match t.shape()[..] {
        [l, l2] | [l, l2, 1] if l == l2 => Ok(l),
        _ => Err(Error::shape(format!("expected an L x L map, got {:?}", t.shape()))),
    }
}
