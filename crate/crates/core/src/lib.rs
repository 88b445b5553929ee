pub mod error;
pub mod genimpute;
pub mod harness;
pub mod impute;
pub mod metrics;
pub mod missingness;
pub mod recsys;
pub mod rng;
pub mod table;

pub use error::{Error, Result};
