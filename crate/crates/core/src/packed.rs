//! Upper-triangle storage of symmetric pair tensors and triangle-only
//! inference convolutions.
//!
//! A symmetric `L x L x c` map is stored as its `L(L+1)/2` fibers with
//! `i <= j`, row by row (diagonal included), as a `[L(L+1)/2, c]` tensor.
//! Convolutions compute only the output positions `s <= t`. Receptive
//! fields that cross the diagonal read the mirrored entry, so no halo is
//! stored.
//!
//! These paths are inference-only; training uses the full maps.

use std::fs;
use std::path::Path;

use crate::cartesian::SequenceFeatures;
use crate::error::{Error, Result};
use crate::par;
use crate::symkernel::{tri_index, SymGenKernel, SymPresKernel, SYMMETRY_TOL};
use crate::tensor::{DenseTensor, PairTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct PackedSymFeature {
    size: usize,
    data: DenseTensor,
}

/// Number of stored fibers for spatial size `l`.
pub fn packed_len(l: usize) -> usize {
    l * (l + 1) / 2
}

/// Row of the fiber `(i, j)` in packed order; arguments may come in either order.
#[inline]
pub fn upper_index(i: usize, j: usize, l: usize) -> usize {
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    // rows before `lo` hold L, L-1, ..., L-lo+1 fibers
    lo * l - lo * lo.saturating_sub(1) / 2 + (hi - lo)
}

impl PackedSymFeature {
    pub fn from_parts(size: usize, data: DenseTensor) -> Result<Self> {
        match data.shape()[..] {
            [rows, _] if rows == packed_len(size) => Ok(PackedSymFeature { size, data }),
            _ => Err(Error::shape(format!(
                "packed feature for L = {size} must be [{}, c], got {:?}",
                packed_len(size),
                data.shape()
            ))),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn data(&self) -> &DenseTensor {
        &self.data
    }

    pub fn entry_count(&self) -> usize {
        self.data.len()
    }

    /// Channel fiber at `(i, j)`, either order.
    pub fn fiber(&self, i: usize, j: usize) -> &[f64] {
        let c = self.channels();
        &self.data.data()[upper_index(i, j, self.size) * c..][..c]
    }

    /// Rebuilds the full symmetric map.
    pub fn unpack(&self) -> PairTensor {
        let (l, c) = (self.size, self.channels());
        let mut out = Vec::with_capacity(l * l * c);
        for i in 0..l {
            for j in 0..l {
                out.extend_from_slice(self.fiber(i, j));
            }
        }
        PairTensor::assume_symmetric(DenseTensor::from_vec(&[l, l, c], out).expect("extents are positive"))
    }

    /// Writes `<stem>.sct1` (`[L(L+1)/2, c]`) and a `<stem>.hdr` sidecar with `L` and `c`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        self.data.save(dir.join(format!("{stem}.sct1")))?;
        fs::write(dir.join(format!("{stem}.hdr")), format!("L={}\nc={}\n", self.size, self.channels()))?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let header = fs::read_to_string(dir.join(format!("{stem}.hdr")))?;
        let size = header
            .lines()
            .find_map(|l| l.trim().strip_prefix("L="))
            .ok_or_else(|| Error::Format("packed header is missing L".into()))?
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Format(format!("L: {e}")))?;
        let data = DenseTensor::load(dir.join(format!("{stem}.sct1")))?;
        Self::from_parts(size, data).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Keeps the `i <= j` fibers of a symmetric map.
///
/// Rejects maps whose asymmetry exceeds [`SYMMETRY_TOL`], unless the map is
/// already flagged symmetric.
pub fn pack(z: &PairTensor) -> Result<PackedSymFeature> {
    if !z.is_symmetric() {
        let asym = z.tensor().asymmetry()?;
        if asym > SYMMETRY_TOL {
            return Err(Error::Precondition(format!("cannot pack: asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}")));
        }
    }
    let (l, c) = (z.size(), z.channels());
    let src = z.tensor().data();
    let mut out = Vec::with_capacity(packed_len(l) * c);
    for i in 0..l {
        for j in i..l {
            out.extend_from_slice(&src[(i * l + j) * c..][..c]);
        }
    }
    PackedSymFeature::from_parts(l, DenseTensor::from_vec(&[packed_len(l), c], out)?)
}

/// Concatenates per-row results into one packed feature.
fn assemble(l: usize, f: usize, rows: Vec<(Vec<f64>, u64)>) -> Result<(PackedSymFeature, u64)> {
    let macs = rows.iter().map(|(_, m)| m).sum();
    let mut data = Vec::with_capacity(packed_len(l) * f);
    for (row, _) in rows {
        data.extend(row);
    }
    Ok((PackedSymFeature::from_parts(l, DenseTensor::from_vec(&[packed_len(l), f], data)?)?, macs))
}

/// Preserving-kernel convolution over the upper triangle only.
pub fn packed_sym_conv(p: &PackedSymFeature, k: &SymPresKernel) -> Result<PackedSymFeature> {
    packed_sym_conv_counted(p, k).map(|(out, _)| out)
}

/// As [`packed_sym_conv`], also returning the multiply-accumulates executed.
pub fn packed_sym_conv_counted(p: &PackedSymFeature, k: &SymPresKernel) -> Result<(PackedSymFeature, u64)> {
    let (l, m) = (p.size, p.channels());
    if m != k.in_channels() {
        return Err(Error::shape(format!("packed input has {m} channels, kernel expects {}", k.in_channels())));
    }
    let (c, f) = (k.size(), k.out_channels());
    let half = c / 2;
    let r = k.packed().data();
    let bias = k.bias().data();

    let rows = par::map_range(l, |s| {
        let mut row = vec![0.0; (l - s) * f];
        let mut macs = 0u64;
        for (t, acc) in (s..l).zip(row.chunks_exact_mut(f)) {
            acc.copy_from_slice(bias);
            for i in 0..c {
                let Some(a) = (s + i).checked_sub(half).filter(|&a| a < l) else { continue };
                for j in 0..c {
                    let Some(b) = (t + j).checked_sub(half).filter(|&b| b < l) else { continue };
                    let fiber = p.fiber(a, b);
                    let taps = &r[tri_index(i, j) * m * f..][..m * f];
                    for (v, wk) in fiber.iter().zip(taps.chunks_exact(f)) {
                        for (o, w) in acc.iter_mut().zip(wk) {
                            *o += v * w;
                        }
                    }
                    macs += (m * f) as u64;
                }
            }
        }
        (row, macs)
    });
    assemble(l, f, rows)
}

/// Triangle-only output of a generating layer, read straight from the
/// sequence features. Returns the packed output and the peak number of
/// feature scalars held (input sequence plus packed output).
pub fn packed_sym_gen_conv(x: &SequenceFeatures, k: &SymGenKernel) -> Result<PackedSymFeature> {
    packed_sym_gen_conv_counted(x, k).map(|(out, _)| out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenConvStats {
    pub macs: u64,
    /// Feature scalars resident at once: the sequence plus the packed output.
    pub peak_feature_entries: usize,
}

pub fn packed_sym_gen_conv_counted(x: &SequenceFeatures, k: &SymGenKernel) -> Result<(PackedSymFeature, GenConvStats)> {
    let (l, n) = (x.len(), x.width());
    if n != k.half_channels() {
        return Err(Error::shape(format!(
            "sequence has {n} features per position, generating kernel expects {}",
            k.half_channels()
        )));
    }
    let (c, f) = (k.size(), k.out_channels());
    let half = c / 2;
    let s_par = k.packed().data();
    let bias = k.bias().data();

    let rows = par::map_range(l, |s| {
        let mut row = vec![0.0; (l - s) * f];
        let mut macs = 0u64;
        for (t, acc) in (s..l).zip(row.chunks_exact_mut(f)) {
            acc.copy_from_slice(bias);
            for i in 0..c {
                let Some(a) = (s + i).checked_sub(half).filter(|&a| a < l) else { continue };
                for j in 0..c {
                    let Some(b) = (t + j).checked_sub(half).filter(|&b| b < l) else { continue };
                    // the Cartesian fiber at (a, b) is concat(x[a], x[b]); both
                    // halves use the same packed rows
                    let taps = &s_par[tri_index(i, j) * n * f..][..n * f];
                    for subject in [a, b] {
                        for (v, wk) in x.row(subject).iter().zip(taps.chunks_exact(f)) {
                            for (o, w) in acc.iter_mut().zip(wk) {
                                *o += v * w;
                            }
                        }
                    }
                    macs += (2 * n * f) as u64;
                }
            }
        }
        (row, macs)
    });
    let (out, macs) = assemble(l, f, rows)?;
    let peak = x.tensor().len() + out.entry_count();
    Ok((out, GenConvStats { macs, peak_feature_entries: peak }))
}
