//! Layer stacks over the self-Cartesian lift.
//!
//! A network maps `L x n` sequence features to an `L x L` probability map:
//! lift, then each layer's convolution and activation. Inputs padded to a
//! larger size carry a `valid` length; every feature map (including the
//! lift) is zeroed outside the leading `valid x valid` block, which makes
//! the padded computation agree with the unpadded one on the valid block.

use super::config::{Activation, LayerKind, LayerSpec, NetworkConfig};
use crate::cartesian::{self_cartesian, SequenceFeatures};
use crate::conv::{
    conv2d_backward, conv2d_forward, relu_backward, relu_forward, sigmoid_backward, sigmoid_forward,
    weighted_bce_upper_masked, Conv2dKernel,
};
use crate::error::{Error, Result};
use crate::symkernel::{
    sym_gen_layer_forward, sym_layer_backward, sym_pres_layer_forward, SymGenKernel, SymKernel, SymLayerCache,
    SymPresKernel, SymmetryCheck,
};
use crate::tensor::{DenseTensor, PairTensor, Rng};

/// Predictions are clamped into `[PROB_EPS, 1 - PROB_EPS]` before the loss.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Standard(Conv2dKernel),
    Sym(SymKernel),
}

impl LayerParams {
    /// Stored kernel entries (packed for symmetric layers).
    pub fn kernel_params(&self) -> usize {
        match self {
            LayerParams::Standard(k) => k.weights().len(),
            LayerParams::Sym(k) => k.packed().len(),
        }
    }

    pub fn bias(&self) -> &DenseTensor {
        match self {
            LayerParams::Standard(k) => k.bias(),
            LayerParams::Sym(k) => k.bias(),
        }
    }

    pub fn in_channels(&self) -> usize {
        match self {
            LayerParams::Standard(k) => k.in_channels(),
            LayerParams::Sym(k) => k.in_channels(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            LayerParams::Standard(k) => k.out_channels(),
            LayerParams::Sym(k) => k.out_channels(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            LayerParams::Standard(k) => k.size(),
            LayerParams::Sym(k) => k.size(),
        }
    }

    fn kind(&self) -> LayerKind {
        match self {
            LayerParams::Standard(_) => LayerKind::Standard,
            LayerParams::Sym(SymKernel::Generating(_)) => LayerKind::SymGenerating,
            LayerParams::Sym(SymKernel::Preserving(_)) => LayerKind::SymPreserving,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    specs: Vec<LayerSpec>,
    n: usize,
    layers: Vec<LayerParams>,
}

enum LayerCache {
    Standard { input: DenseTensor },
    Sym(SymLayerCache),
}

/// Forward-pass state for [`Network::backward`].
pub struct Trace {
    valid: usize,
    caches: Vec<LayerCache>,
    pre: Vec<DenseTensor>,
    post: Vec<DenseTensor>,
}

/// Loss and packed-parameter gradients of one sample.
#[derive(Clone, Debug)]
pub struct SampleGrads {
    pub loss: f64,
    pub grads: Vec<DenseTensor>,
    pub pred: DenseTensor,
}

impl Network {
    /// Glorot-initialized standard layers, half-Glorot symmetric layers,
    /// zero biases.
    pub fn init(cfg: &NetworkConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let mut layers = Vec::with_capacity(cfg.layers.len());
        let mut cin = 2 * cfg.n;
        for spec in &cfg.layers {
            let (c, f) = (spec.size, spec.out_channels);
            layers.push(match spec.kind {
                LayerKind::Standard => LayerParams::Standard(Conv2dKernel::glorot(c, cin, f, rng)?),
                LayerKind::SymGenerating => {
                    LayerParams::Sym(SymKernel::Generating(SymGenKernel::init(c, cin / 2, f, rng)?))
                }
                LayerKind::SymPreserving => {
                    LayerParams::Sym(SymKernel::Preserving(SymPresKernel::init(c, cin, f, rng)?))
                }
            });
            cin = f;
        }
        Ok(Network { specs: cfg.layers.clone(), n: cfg.n, layers })
    }

    /// Assembles a network from explicit parameters, checking the channel chain.
    pub fn from_layers(cfg: &NetworkConfig, layers: Vec<LayerParams>) -> Result<Self> {
        cfg.validate()?;
        if layers.len() != cfg.layers.len() {
            return Err(Error::config(format!("{} layer specs but {} parameter sets", cfg.layers.len(), layers.len())));
        }
        let mut cin = 2 * cfg.n;
        for (idx, (spec, p)) in cfg.layers.iter().zip(&layers).enumerate() {
            if p.kind() != spec.kind
                || p.size() != spec.size
                || p.in_channels() != cin
                || p.out_channels() != spec.out_channels
            {
                return Err(Error::config(format!(
                    "layer {idx}: parameters ({} C={} {}->{}) do not match spec {spec} with {cin} input channels",
                    p.kind(),
                    p.size(),
                    p.in_channels(),
                    p.out_channels()
                )));
            }
            cin = spec.out_channels;
        }
        Ok(Network { specs: cfg.layers.clone(), n: cfg.n, layers })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self.layers.first(), Some(LayerParams::Sym(_)))
    }

    pub fn kernel_param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::kernel_params).sum()
    }

    pub fn total_param_count(&self) -> usize {
        self.layers.iter().map(|l| l.kernel_params() + l.bias().len()).sum()
    }

    /// Trainable tensors: kernel (packed for symmetric layers) then bias,
    /// per layer. Gradients use the same order.
    pub fn params(&self) -> Vec<&DenseTensor> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                LayerParams::Standard(k) => [k.weights(), k.bias()],
                LayerParams::Sym(k) => [k.packed(), k.bias()],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            match l {
                LayerParams::Standard(k) => {
                    let (w, b) = k.weights_and_bias_mut();
                    out.push(w);
                    out.push(b);
                }
                LayerParams::Sym(k) => {
                    let (w, b) = k.packed_and_bias_mut();
                    out.push(w);
                    out.push(b);
                }
            }
        }
        out
    }

    /// Probability map `L x L x 1` for an unpadded sequence.
    pub fn forward(&self, x: &SequenceFeatures) -> Result<PairTensor> {
        Ok(self.forward_masked(x, x.len())?.0)
    }

    /// Forward pass on features padded beyond `valid` positions.
    pub fn forward_masked(&self, x: &SequenceFeatures, valid: usize) -> Result<(PairTensor, Trace)> {
        if x.width() != self.n {
            return Err(Error::config(format!("network expects n = {}, got {}", self.n, x.width())));
        }
        if valid == 0 || valid > x.len() {
            return Err(Error::shape(format!("valid length {valid} outside 1..={}", x.len())));
        }
        let mut h = self_cartesian(x);
        mask_outside(&mut h, valid);
        let mut trace = Trace { valid, caches: vec![], pre: vec![], post: vec![] };
        let mut symmetric = false;
        for (spec, layer) in self.specs.iter().zip(&self.layers) {
            let (pre, cache) = match layer {
                LayerParams::Standard(k) => (conv2d_forward(&h, k)?, LayerCache::Standard { input: h }),
                LayerParams::Sym(SymKernel::Generating(k)) => {
                    let (out, cache) = sym_gen_layer_forward(&h, k, SymmetryCheck::Unchecked)?;
                    (out.into_tensor(), LayerCache::Sym(cache))
                }
                LayerParams::Sym(SymKernel::Preserving(k)) => {
                    let z = PairTensor::assume_symmetric(h);
                    let (out, cache) = sym_pres_layer_forward(&z, k, SymmetryCheck::Unchecked)?;
                    (out.into_tensor(), LayerCache::Sym(cache))
                }
            };
            symmetric = matches!(layer, LayerParams::Sym(_));
            let mut post = match spec.activation {
                Activation::Relu => relu_forward(&pre),
                Activation::Sigmoid => sigmoid_forward(&pre),
                Activation::None => pre.clone(),
            };
            mask_outside(&mut post, valid);
            trace.caches.push(cache);
            trace.pre.push(pre);
            trace.post.push(post.clone());
            h = post;
        }
        let out = if symmetric { PairTensor::assume_symmetric(h) } else { PairTensor::new(h)? };
        Ok((out, trace))
    }

    /// Gradients of the parameters given the loss gradient `d_out` with
    /// respect to the network output, in [`Network::params`] order.
    pub fn backward(&self, trace: &Trace, d_out: &DenseTensor) -> Result<Vec<DenseTensor>> {
        let mut grads = vec![None; 2 * self.layers.len()];
        let mut g = d_out.clone();
        for idx in (0..self.layers.len()).rev() {
            mask_outside(&mut g, trace.valid);
            let d_pre = match self.specs[idx].activation {
                Activation::Relu => relu_backward(&trace.pre[idx], &g)?,
                Activation::Sigmoid => sigmoid_backward(&trace.post[idx], &g)?,
                Activation::None => g,
            };
            let (d_k, d_b, d_in) = match &trace.caches[idx] {
                LayerCache::Standard { input } => {
                    let LayerParams::Standard(k) = &self.layers[idx] else { unreachable!("trace built by this network") };
                    let c = conv2d_backward(input, k, &d_pre)?;
                    (c.d_weights, c.d_bias, c.d_input)
                }
                LayerCache::Sym(cache) => {
                    let s = sym_layer_backward(cache, &d_pre)?;
                    (s.d_packed, s.d_bias, s.d_input)
                }
            };
            grads[2 * idx] = Some(d_k);
            grads[2 * idx + 1] = Some(d_b);
            g = d_in;
        }
        Ok(grads.into_iter().map(|g| g.expect("every layer visited")).collect())
    }

    /// Clamped weighted BCE of one (possibly padded) sample and its gradients.
    pub fn loss_and_grads(
        &self,
        x: &SequenceFeatures,
        label: &DenseTensor,
        valid: usize,
        pos_weight: f64,
        min_sep: usize,
    ) -> Result<SampleGrads> {
        let (out, trace) = self.forward_masked(x, valid)?;
        let pred = out.into_tensor();
        let clamped = pred.map(|p| p.clamp(PROB_EPS, 1.0 - PROB_EPS));
        let label = label.clone().reshape(pred.shape())?;
        let (loss, mut d_pred) = weighted_bce_upper_masked(&clamped, &label, pos_weight, min_sep, valid)?;
        for (d, (&p, &c)) in d_pred.data_mut().iter_mut().zip(pred.data().iter().zip(clamped.data())) {
            if p != c {
                *d = 0.0;
            }
        }
        let grads = self.backward(&trace, &d_pred)?;
        Ok(SampleGrads { loss, grads, pred })
    }
}

/// Zeroes every fiber `(i, j)` with `i >= valid` or `j >= valid`.
fn mask_outside(t: &mut DenseTensor, valid: usize) {
    let (l, c) = t.pair_dims().expect("pair tensor");
    if valid >= l {
        return;
    }
    let d = t.data_mut();
    for i in 0..l {
        let from = if i < valid { valid } else { 0 };
        d[(i * l + from) * c..(i + 1) * l * c].fill(0.0);
    }
}
