//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records operations as they run; [`Tape::backward`] replays them
//! in reverse. Broadcasting is limited to scalar-with-tensor ops, everything
//! else needs explicit reshapes ([`Tape::repeat_rows`], [`Tape::reshape`]).

pub mod checkpoint;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params, GradCheckReport};
pub use params::{BoundParams, ParamId, ParamStore};
pub use tape::{sigmoid, Binary, Gradients, Tape, Unary, Var};
pub use tensor::Tensor;
