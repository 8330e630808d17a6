//! Dense tensors with tape-based reverse-mode differentiation.

pub mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{check_store_gradients, finite_difference_gradient, GradCheckReport};
pub use params::{ParamId, ParameterStore};
pub use tape::{ElementwiseOp, Tape, Var};
pub use tensor::Tensor;

