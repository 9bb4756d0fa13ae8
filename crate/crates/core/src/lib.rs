//! Symmetry-structured convolution layers for pair-matrix prediction.
//!
//! A length-`L` feature sequence is lifted to an `L x L` pair tensor by the
//! self-Cartesian product ([`cartesian`]). A symmetry-generating layer then
//! turns that (non-symmetric) tensor into a symmetric feature map, and
//! symmetry-preserving layers keep it symmetric ([`symkernel`]). Both kernel
//! families store only their free parameters and expand to full kernels for
//! the standard convolution in [`conv`]; gradients are folded back onto the
//! packed parameters. [`packed`] runs inference on the upper triangle only.
//! [`harness`] trains and compares symmetric and plain networks on synthetic
//! pairing tasks, and [`oracle`] holds naive reference implementations.

pub mod cartesian;
pub mod cli;
pub mod conv;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod packed;
pub mod par;
pub mod symkernel;
pub mod tensor;

pub use cartesian::{pair_swap_check, self_cartesian, SequenceFeatures};
pub use conv::{conv2d_backward, conv2d_forward, weighted_bce_upper, Conv2dKernel, ConvGrads};
pub use error::{Error, Result};
pub use packed::{pack, packed_sym_conv, packed_sym_gen_conv, PackedSymFeature};
pub use symkernel::{
    fold_gen_grad, fold_pres_grad, sym_gen_layer_forward, sym_layer_backward, sym_pres_layer_forward, SymGenKernel,
    SymKernel, SymPresKernel, SymmetryCheck,
};
pub use tensor::{DenseTensor, PairTensor, Rng};
