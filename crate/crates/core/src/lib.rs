pub mod data;
mod error;
pub mod eval;
pub mod index;
pub mod matcher;
pub mod nn;
pub mod preprocess;

pub use error::{Error, FormatError, IdxError, Result};
