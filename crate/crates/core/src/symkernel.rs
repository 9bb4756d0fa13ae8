//! Packed parameterizations of symmetric convolution kernels.
//!
//! Two kernel families keep pair-tensor feature maps symmetric
//! (`Z[s, t, :] == Z[t, s, :]`):
//!
//! * A **symmetry-generating** kernel `W` (`C x C x 2n x F`) is symmetric in
//!   its two spatial indices and has identical channel halves,
//!   `W[i, j, k, f] == W[j, i, k, f] == W[i, j, k + n, f]`. Applied to a
//!   self-Cartesian input it produces a symmetric output even though the input
//!   itself is not symmetric.
//! * A **symmetry-preserving** kernel `Q` (`C x C x m x F`) is symmetric in its
//!   spatial indices only and maps symmetric inputs to symmetric outputs.
//!
//! Only the free parameters are stored: `S[i, j, k, f]` / `R[i, j, k, f]` for
//! `i >= j` (and `k < n` for the generating kernel). The full kernel is
//! re-expanded from packed storage on every forward pass, so tied copies
//! cannot drift apart during training. Gradients with respect to the packed
//! parameters are obtained by folding (summing) the full-kernel gradient
//! over every position tied to the same parameter.
//!
//! Packed layout is `[C(C+1)/2, channels, F]`, row-major. The spatial pair
//! `(i, j)` with `i >= j` (0-based) lives at row [`tri_index`]`(i, j) = i(i+1)/2 + j`.

use std::fs;
use std::path::Path;

use crate::conv::{conv2d_backward, conv2d_forward, Conv2dKernel};
use crate::cartesian::pair_swap_check;
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, PairTensor, Rng};

/// Tolerance for checked symmetry preconditions.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Row of the lower-triangle pair `(i, j)`; the arguments may come in either order.
#[inline]
pub fn tri_index(i: usize, j: usize) -> usize {
    let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
    hi * (hi + 1) / 2 + lo
}

pub fn tri_len(size: usize) -> usize {
    size * (size + 1) / 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SymmetryCheck {
    /// Verify input structure before computing (O(L^2 c) scan).
    #[default]
    Checked,
    Unchecked,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymGenKernel {
    size: usize,
    packed: DenseTensor,
    bias: DenseTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymPresKernel {
    size: usize,
    packed: DenseTensor,
    bias: DenseTensor,
}

fn validate_packed(size: usize, packed: &DenseTensor, bias: &DenseTensor) -> Result<(usize, usize)> {
    if size.is_multiple_of(2) {
        return Err(Error::config(format!("kernel size must be odd, got {size}")));
    }
    let [t, ch, f] = packed.shape()[..] else {
        return Err(Error::shape(format!("packed kernel must be rank 3, got {:?}", packed.shape())));
    };
    if t != tri_len(size) {
        return Err(Error::shape(format!(
            "packed kernel has {t} spatial rows, size {size} needs {}",
            tri_len(size)
        )));
    }
    if bias.shape() != [f] {
        return Err(Error::shape(format!("bias shape {:?} does not match F = {f}", bias.shape())));
    }
    Ok((ch, f))
}

/// Uniform draw in `(-b/2, b/2)` with `b = sqrt(6 / (fan_in + fan_out))`.
///
/// Each packed entry appears at least twice in its expanded kernel, so the
/// Glorot bound is halved. Fans are those of the expanded kernel.
pub fn init_half_glorot(rng: &mut Rng, fan_in: usize, fan_out: usize, packed_shape: &[usize]) -> Result<DenseTensor> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::config("fans must be positive"));
    }
    DenseTensor::uniform(packed_shape, half_glorot_bound(fan_in, fan_out), rng)
}

pub fn half_glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    0.5 * (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl SymGenKernel {
    /// `packed` is `[C(C+1)/2, n, F]`; the expanded kernel has `2n` input channels.
    pub fn new(size: usize, packed: DenseTensor, bias: DenseTensor) -> Result<Self> {
        let (n, f) = validate_packed(size, &packed, &bias)?;
        let k = SymGenKernel { size, packed, bias };
        assert_eq!(k.stored_count(), size * (size + 1) * n * f / 2);
        Ok(k)
    }

    pub fn random(size: usize, n: usize, out: usize, bound: f64, rng: &mut Rng) -> Result<Self> {
        let packed = DenseTensor::uniform(&[tri_len(size), n, out], bound, rng)?;
        let bias = DenseTensor::uniform(&[out], bound, rng)?;
        Self::new(size, packed, bias)
    }

    /// Half-Glorot packed weights, zero bias.
    pub fn init(size: usize, n: usize, out: usize, rng: &mut Rng) -> Result<Self> {
        let shape = [tri_len(size), n, out];
        let packed = init_half_glorot(rng, size * size * 2 * n, size * size * out, &shape)?;
        Self::new(size, packed, DenseTensor::zeros(&[out])?)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Features per position, half the expanded input channel count.
    pub fn half_channels(&self) -> usize {
        self.packed.shape()[1]
    }

    pub fn in_channels(&self) -> usize {
        2 * self.half_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.packed.shape()[2]
    }

    pub fn packed(&self) -> &DenseTensor {
        &self.packed
    }

    pub fn packed_mut(&mut self) -> &mut DenseTensor {
        &mut self.packed
    }

    pub fn bias(&self) -> &DenseTensor {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut DenseTensor {
        &mut self.bias
    }

    /// `S[i, j, k, f]` for any spatial order of `(i, j)`.
    pub fn param(&self, i: usize, j: usize, k: usize, f: usize) -> f64 {
        let (n, fo) = (self.half_channels(), self.out_channels());
        self.packed.data()[(tri_index(i, j) * n + k) * fo + f]
    }

    pub fn stored_count(&self) -> usize {
        self.packed.len()
    }

    pub fn expanded_count(&self) -> usize {
        self.size * self.size * self.in_channels() * self.out_channels()
    }

    /// `W[i, j, k, f] = S[max(i, j), min(i, j), k mod n, f]`.
    pub fn expand(&self) -> Conv2dKernel {
        let (c, n, f) = (self.size, self.half_channels(), self.out_channels());
        let s = self.packed.data();
        let mut w = Vec::with_capacity(c * c * 2 * n * f);
        for i in 0..c {
            for j in 0..c {
                let row = &s[tri_index(i, j) * n * f..][..n * f];
                w.extend_from_slice(row);
                w.extend_from_slice(row);
            }
        }
        let w = DenseTensor::from_vec(&[c, c, 2 * n, f], w).expect("extents are positive");
        Conv2dKernel::new(w, self.bias.clone()).expect("packed kernel was validated")
    }
}

impl SymPresKernel {
    /// `packed` is `[C(C+1)/2, m, F]`.
    pub fn new(size: usize, packed: DenseTensor, bias: DenseTensor) -> Result<Self> {
        let (m, f) = validate_packed(size, &packed, &bias)?;
        let k = SymPresKernel { size, packed, bias };
        assert_eq!(k.stored_count(), size * (size + 1) * m * f / 2);
        Ok(k)
    }

    pub fn random(size: usize, m: usize, out: usize, bound: f64, rng: &mut Rng) -> Result<Self> {
        let packed = DenseTensor::uniform(&[tri_len(size), m, out], bound, rng)?;
        let bias = DenseTensor::uniform(&[out], bound, rng)?;
        Self::new(size, packed, bias)
    }

    pub fn init(size: usize, m: usize, out: usize, rng: &mut Rng) -> Result<Self> {
        let shape = [tri_len(size), m, out];
        let packed = init_half_glorot(rng, size * size * m, size * size * out, &shape)?;
        Self::new(size, packed, DenseTensor::zeros(&[out])?)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn in_channels(&self) -> usize {
        self.packed.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.packed.shape()[2]
    }

    pub fn packed(&self) -> &DenseTensor {
        &self.packed
    }

    pub fn packed_mut(&mut self) -> &mut DenseTensor {
        &mut self.packed
    }

    pub fn bias(&self) -> &DenseTensor {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut DenseTensor {
        &mut self.bias
    }

    pub fn param(&self, i: usize, j: usize, k: usize, f: usize) -> f64 {
        let (m, fo) = (self.in_channels(), self.out_channels());
        self.packed.data()[(tri_index(i, j) * m + k) * fo + f]
    }

    pub fn stored_count(&self) -> usize {
        self.packed.len()
    }

    pub fn expanded_count(&self) -> usize {
        self.size * self.size * self.in_channels() * self.out_channels()
    }

    /// `Q[i, j, k, f] = R[max(i, j), min(i, j), k, f]`.
    pub fn expand(&self) -> Conv2dKernel {
        let (c, m, f) = (self.size, self.in_channels(), self.out_channels());
        let r = self.packed.data();
        let mut q = Vec::with_capacity(c * c * m * f);
        for i in 0..c {
            for j in 0..c {
                q.extend_from_slice(&r[tri_index(i, j) * m * f..][..m * f]);
            }
        }
        let q = DenseTensor::from_vec(&[c, c, m, f], q).expect("extents are positive");
        Conv2dKernel::new(q, self.bias.clone()).expect("packed kernel was validated")
    }
}

fn square_kernel_dims(d: &DenseTensor) -> Result<(usize, usize, usize)> {
    match d.shape()[..] {
        [c, c2, k, f] if c == c2 && c % 2 == 1 => Ok((c, k, f)),
        _ => Err(Error::shape(format!("expected an odd C x C x k x F kernel gradient, got {:?}", d.shape()))),
    }
}

/// Packed gradient of a generating kernel from the full-kernel gradient:
///
/// ```text
/// dS[i, j, k, f] = dW[i, j, k, f] + dW[j, i, k, f] + dW[i, j, k+n, f] + dW[j, i, k+n, f]   (i > j)
/// dS[i, i, k, f] = dW[i, i, k, f] + dW[i, i, k+n, f]
/// ```
pub fn fold_gen_grad(d_w: &DenseTensor) -> Result<DenseTensor> {
    let (c, ch, f) = square_kernel_dims(d_w)?;
    if ch % 2 != 0 {
        return Err(Error::shape(format!("generating kernel gradient has odd channel count {ch}")));
    }
    let n = ch / 2;
    let g = d_w.data();
    let at = |i: usize, j: usize, k: usize, ff: usize| g[((i * c + j) * ch + k) * f + ff];
    let mut out = vec![0.0; tri_len(c) * n * f];
    for i in 0..c {
        for j in 0..=i {
            let base = tri_index(i, j) * n * f;
            for k in 0..n {
                for ff in 0..f {
                    let v = if i == j {
                        at(i, i, k, ff) + at(i, i, k + n, ff)
                    } else {
                        at(i, j, k, ff) + at(j, i, k, ff) + at(i, j, k + n, ff) + at(j, i, k + n, ff)
                    };
                    out[base + k * f + ff] = v;
                }
            }
        }
    }
    DenseTensor::from_vec(&[tri_len(c), n, f], out)
}

/// Packed gradient of a preserving kernel:
///
/// ```text
/// dR[i, j, k, f] = dQ[i, j, k, f] + dQ[j, i, k, f]   (i > j)
/// dR[i, i, k, f] = dQ[i, i, k, f]
/// ```
pub fn fold_pres_grad(d_q: &DenseTensor) -> Result<DenseTensor> {
    let (c, m, f) = square_kernel_dims(d_q)?;
    let g = d_q.data();
    let block = m * f;
    let mut out = vec![0.0; tri_len(c) * block];
    for i in 0..c {
        for j in 0..=i {
            let dst = &mut out[tri_index(i, j) * block..][..block];
            let a = &g[(i * c + j) * block..][..block];
            if i == j {
                dst.copy_from_slice(a);
            } else {
                let b = &g[(j * c + i) * block..][..block];
                for ((d, x), y) in dst.iter_mut().zip(a).zip(b) {
                    *d = x + y;
                }
            }
        }
    }
    DenseTensor::from_vec(&[tri_len(c), m, f], out)
}

/// Either packed kernel family.
#[derive(Clone, Debug, PartialEq)]
pub enum SymKernel {
    Generating(SymGenKernel),
    Preserving(SymPresKernel),
}

impl SymKernel {
    pub fn expand(&self) -> Conv2dKernel {
        match self {
            SymKernel::Generating(k) => k.expand(),
            SymKernel::Preserving(k) => k.expand(),
        }
    }

    pub fn fold(&self, d_full: &DenseTensor) -> Result<DenseTensor> {
        match self {
            SymKernel::Generating(_) => fold_gen_grad(d_full),
            SymKernel::Preserving(_) => fold_pres_grad(d_full),
        }
    }

    pub fn packed(&self) -> &DenseTensor {
        match self {
            SymKernel::Generating(k) => k.packed(),
            SymKernel::Preserving(k) => k.packed(),
        }
    }

    pub fn packed_mut(&mut self) -> &mut DenseTensor {
        match self {
            SymKernel::Generating(k) => k.packed_mut(),
            SymKernel::Preserving(k) => k.packed_mut(),
        }
    }

    pub fn bias(&self) -> &DenseTensor {
        match self {
            SymKernel::Generating(k) => k.bias(),
            SymKernel::Preserving(k) => k.bias(),
        }
    }

    pub fn bias_mut(&mut self) -> &mut DenseTensor {
        match self {
            SymKernel::Generating(k) => k.bias_mut(),
            SymKernel::Preserving(k) => k.bias_mut(),
        }
    }

    pub fn packed_and_bias_mut(&mut self) -> (&mut DenseTensor, &mut DenseTensor) {
        match self {
            SymKernel::Generating(k) => (&mut k.packed, &mut k.bias),
            SymKernel::Preserving(k) => (&mut k.packed, &mut k.bias),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            SymKernel::Generating(k) => k.size(),
            SymKernel::Preserving(k) => k.size(),
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            SymKernel::Generating(k) => k.in_channels(),
            SymKernel::Preserving(k) => k.in_channels(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            SymKernel::Generating(k) => k.out_channels(),
            SymKernel::Preserving(k) => k.out_channels(),
        }
    }

    /// True when the expansion satisfies its family's tying predicates exactly.
    pub fn expansion_is_tied(&self) -> bool {
        let w = self.expand();
        match self {
            SymKernel::Generating(_) => is_generating_kernel(w.weights()),
            SymKernel::Preserving(_) => is_spatially_symmetric(w.weights()),
        }
    }

    /// Writes `<stem>.sct1` (packed), `<stem>.bias.sct1` and a `<stem>.hdr`
    /// text header of `key=value` lines (`kind`, `C`, `n` or `m`, `F`).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let (kind, chan_key, chans) = match self {
            SymKernel::Generating(k) => ("gen", "n", k.half_channels()),
            SymKernel::Preserving(k) => ("pres", "m", k.in_channels()),
        };
        self.packed().save(dir.join(format!("{stem}.sct1")))?;
        self.bias().save(dir.join(format!("{stem}.bias.sct1")))?;
        let header = format!(
            "kind={kind}\nC={}\n{chan_key}={chans}\nF={}\n",
            self.size(),
            self.out_channels()
        );
        fs::write(dir.join(format!("{stem}.hdr")), header)?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let header = fs::read_to_string(dir.join(format!("{stem}.hdr")))?;
        let mut kind = None;
        let (mut size, mut chans, mut out) = (None, None, None);
        for line in header.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("malformed header line {line:?}")))?;
            let num = || value.trim().parse::<usize>().map_err(|e| Error::Format(format!("{key}: {e}")));
            match key.trim() {
                "kind" => kind = Some(value.trim().to_string()),
                "C" => size = Some(num()?),
                "n" | "m" => chans = Some(num()?),
                "F" => out = Some(num()?),
                other => return Err(Error::Format(format!("unknown header key {other:?}"))),
            }
        }
        let missing = |k: &str| Error::Format(format!("header is missing {k}"));
        let size = size.ok_or_else(|| missing("C"))?;
        let chans = chans.ok_or_else(|| missing("n/m"))?;
        let out = out.ok_or_else(|| missing("F"))?;
        let packed = DenseTensor::load(dir.join(format!("{stem}.sct1")))?;
        let bias = DenseTensor::load(dir.join(format!("{stem}.bias.sct1")))?;
        if packed.shape() != [tri_len(size), chans, out] {
            return Err(Error::Format(format!(
                "packed tensor shape {:?} disagrees with header",
                packed.shape()
            )));
        }
        match kind.as_deref() {
            Some("gen") => Ok(SymKernel::Generating(SymGenKernel::new(size, packed, bias)?)),
            Some("pres") => Ok(SymKernel::Preserving(SymPresKernel::new(size, packed, bias)?)),
            other => Err(Error::Format(format!("unknown kernel kind {other:?}"))),
        }
    }
}

/// `W[i, j, :, :] == W[j, i, :, :]` exactly.
pub fn is_spatially_symmetric(w: &DenseTensor) -> bool {
    let [c, _, k, f] = w.shape()[..] else { return false };
    let block = k * f;
    let d = w.data();
    (0..c).all(|i| (0..c).all(|j| d[(i * c + j) * block..][..block] == d[(j * c + i) * block..][..block]))
}

/// Spatially symmetric and `W[i, j, k, :] == W[i, j, k + n, :]` exactly.
pub fn is_generating_kernel(w: &DenseTensor) -> bool {
    let [c, _, ch, f] = w.shape()[..] else { return false };
    if ch % 2 != 0 || !is_spatially_symmetric(w) {
        return false;
    }
    let half = ch / 2 * f;
    w.data().chunks_exact(ch * f).take(c * c).all(|fiber| fiber[..half] == fiber[half..])
}

/// State retained by a symmetric layer's forward pass for its backward pass.
#[derive(Clone, Debug)]
pub struct SymLayerCache {
    input: DenseTensor,
    expanded: Conv2dKernel,
    kind: SymKernelKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymKernelKind {
    Generating,
    Preserving,
}

impl SymLayerCache {
    pub fn kind(&self) -> SymKernelKind {
        self.kind
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymGrads {
    pub d_packed: DenseTensor,
    pub d_bias: DenseTensor,
    pub d_input: DenseTensor,
}

/// Generating layer on a self-Cartesian input `L x L x 2n`.
///
/// Checked mode additionally verifies the channel-half swap structure of
/// the input.
pub fn sym_gen_layer_forward(
    x_pair: &DenseTensor,
    kernel: &SymGenKernel,
    check: SymmetryCheck,
) -> Result<(PairTensor, SymLayerCache)> {
    let (_, ch) = x_pair.pair_dims()?;
    if ch != kernel.in_channels() {
        return Err(Error::shape(format!(
            "generating layer expects {} channels (2n), got {ch}",
            kernel.in_channels()
        )));
    }
    if check == SymmetryCheck::Checked {
        let dev = pair_swap_check(x_pair)?;
        if dev > SYMMETRY_TOL {
            return Err(Error::Precondition(format!("input is not a self-Cartesian lift (deviation {dev:e})")));
        }
    }
    let expanded = kernel.expand();
    let out = conv2d_forward(x_pair, &expanded)?;
    let cache = SymLayerCache { input: x_pair.clone(), expanded, kind: SymKernelKind::Generating };
    Ok((PairTensor::assume_symmetric(out), cache))
}

/// Preserving layer on a symmetric input `L x L x m`.
///
/// In checked mode an input not already flagged symmetric is scanned and
/// rejected if its asymmetry exceeds [`SYMMETRY_TOL`].
pub fn sym_pres_layer_forward(
    z: &PairTensor,
    kernel: &SymPresKernel,
    check: SymmetryCheck,
) -> Result<(PairTensor, SymLayerCache)> {
    if z.channels() != kernel.in_channels() {
        return Err(Error::shape(format!(
            "preserving layer expects {} channels, got {}",
            kernel.in_channels(),
            z.channels()
        )));
    }
    if check == SymmetryCheck::Checked && !z.is_symmetric() {
        let asym = z.tensor().asymmetry()?;
        if asym > SYMMETRY_TOL {
            return Err(Error::Precondition(format!("input asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}")));
        }
    }
    let expanded = kernel.expand();
    let out = conv2d_forward(z.tensor(), &expanded)?;
    let cache = SymLayerCache { input: z.tensor().clone(), expanded, kind: SymKernelKind::Preserving };
    Ok((PairTensor::assume_symmetric(out), cache))
}

/// Full-kernel backprop followed by folding onto the packed parameters.
pub fn sym_layer_backward(cache: &SymLayerCache, upstream: &DenseTensor) -> Result<SymGrads> {
    let grads = conv2d_backward(&cache.input, &cache.expanded, upstream)?;
    let d_packed = match cache.kind {
        SymKernelKind::Generating => fold_gen_grad(&grads.d_weights)?,
        SymKernelKind::Preserving => fold_pres_grad(&grads.d_weights)?,
    };
    Ok(SymGrads { d_packed, d_bias: grads.d_bias, d_input: grads.d_input })
}
