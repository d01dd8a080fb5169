//! Training-free scoring and latency-constrained architecture search.

mod mutate;
mod pareto;
mod proxy;
mod search;

pub use mutate::*;
pub use pareto::*;
pub use proxy::*;
pub use search::*;
