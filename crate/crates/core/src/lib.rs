pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod evalio;
pub mod field;
pub mod losses;
pub mod lowrank;
pub mod mlp;
pub mod trainer;
pub mod wavesim;

pub use error::{Error, Result};
