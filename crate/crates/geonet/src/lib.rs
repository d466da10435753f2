//! Convolutional policy/value networks for pivoting-cube ensembles.
//!
//! Each cube gets a `(CW, CCW)` logit pair from a stack of masked
//! convolutions; a pooled head gives the state value. Kernels can be
//! constrained to be rotation invariant, and channels can be paired so
//! that mirroring the ensemble swaps every cube's CW and CCW logits.
//! Gradients are written out by hand.

pub mod basis;
pub mod checkpoint;
pub mod dense;
pub mod graph;
pub mod net;
pub mod scalar;

pub use basis::{build_kernel, reynolds_basis, InvariantKernelBasis};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use graph::CellBatch;
pub use net::{
    Activation, Arch, ForwardCache, LayerKind, LayerSpec, NetConfig, NetError, ParamSpec,
    PolicyValueNet,
};
pub use scalar::Scalar;
