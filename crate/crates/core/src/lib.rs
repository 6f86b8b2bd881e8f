pub mod additive;
pub mod completion;
pub mod error;
pub mod expharness;
pub mod grouplasso;
pub mod kernels;
pub mod linalg;

pub use error::{KblError, Result};
