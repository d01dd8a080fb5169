//! Detection losses and feature distillation.

mod det;
mod distill;
mod schedule;

pub use det::*;
pub use distill::*;
pub use schedule::*;
