pub mod arch;
pub mod cli;
pub mod assign;
pub mod cost;
pub mod error;
pub mod geometry;
pub mod json;
pub mod losses;
pub mod nas;
pub mod parallel;
pub mod tensor;

pub use error::{Error, Result};
