//! Reverse-mode automatic differentiation over dense, row-major tensors.
//!
//! A [`Graph`] is an append-only tape: every operation pushes a node whose
//! parents already exist, so node order is a topological order and the graph
//! cannot contain cycles. Graphs are meant to be rebuilt for every forward
//! pass. [`Graph::backward`] walks the tape in reverse once and accumulates
//! gradients into leaves created with `requires_grad = true`.
//!
//! The element type is generic over [`Real`] (`f32` for training, `f64` for
//! finite-difference checks).

mod error;
pub mod flops;
pub mod gradcheck;
mod graph;
mod ops;
mod tensor;

pub use error::AutodiffError;
pub use graph::{Graph, NodeId};
pub use tensor::{Mask, Real, Tensor};

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Fill value used by [`Graph::masked_fill`] when the caller has no preference.
pub const DEFAULT_MASK_FILL: f64 = -1e9;
