//! Trainable building blocks with explicit forward caches and analytic
//! backward passes.

mod adam;
mod attention;
mod dense;
mod loss;
mod pool;
mod positional;

#[cfg(test)]
pub(crate) mod gradcheck;

pub use adam::{Adam, AdamConfig};
pub use attention::{AttentionCache, AttentionGrads, MultiHeadAttention};
pub use dense::{Activation, DenseCache, DenseGrads, DenseLayer};
pub use loss::LossKind;
pub use pool::Pooling;
pub use positional::PositionalEncoding;

use crate::tensor::Tensor;

/// Ordered access to a model's trainable tensors. Gradient vectors produced
/// by the backward passes use the same order.
pub trait Parameters {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }
}
