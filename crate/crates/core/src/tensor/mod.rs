//! Dense tensors and reverse-mode automatic differentiation.

mod dense;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod real;

pub use dense::Tensor;
pub use graph::{Graph, Mode, Var};
pub use real::Real;
