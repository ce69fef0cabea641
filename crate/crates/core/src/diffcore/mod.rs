//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! [`Tape::backward`] walks the nodes in reverse insertion order, which is a
//! valid reverse topological order because a node can only reference nodes
//! created before it.
//!
//! Besides the usual neural-network primitives the tape has fused kernels
//! for box geometry (pairwise intersection log-volumes, per-row log-volumes,
//! elementwise smooth max/min), the column coefficient of variation and row
//! normalizations used by the decoder.

mod adam;
mod tape;

pub use adam::{clip_global_norm, Adam, AdamState};
pub use tape::{Gradients, Tape, Var};

pub type Matrix = ndarray::Array2<f64>;
