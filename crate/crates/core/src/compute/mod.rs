//! Dense tensors and a tape-based reverse-mode differentiator.
//!
//! Only the shapes the transformer needs are supported: 2-D matrix products,
//! elementwise ops on equal shapes, and adding a trailing vector to each row.

mod scalar;
mod tape;
mod tensor;

pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var, GELU_CUBIC, GELU_SQRT_2_OVER_PI};
pub use tensor::Tensor;
