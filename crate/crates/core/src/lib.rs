pub mod autograd;
pub mod cli;
pub mod decoding;
pub mod error;

pub use error::{Error, Result};
pub mod frontend;
pub mod lm;
pub mod model;
pub mod training;
pub mod wordpiece;
