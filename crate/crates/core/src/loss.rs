//! Pixel-wise classification loss.

use crate::error::Result;
use crate::tensor::{Graph, Real, Var};

/// Mean over all pixels of `−log softmax(logits)[target]`.
///
/// `logits` is `C×H×W` or `B×C×H×W`; `targets` holds one class id per pixel
/// in batch-major, row-major order.
pub fn cross_entropy_loss<T: Real>(g: &mut Graph<'_, T>, logits: Var, targets: &[u8]) -> Result<Var> {
    g.cross_entropy(logits, targets)
}

/// Loss value without recording gradients.
pub fn cross_entropy_value<T: Real>(logits: &crate::tensor::Tensor<T>, targets: &[u8]) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.input(logits);
    let l = g.cross_entropy(x, targets)?;
    Ok(g.value(l).item()?.as_f64())
}
