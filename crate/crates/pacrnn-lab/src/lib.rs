pub mod cli;
pub mod data;
pub mod error;
pub mod layers;
pub mod multilingual;
pub mod pacrnn;
pub mod serialize;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(test)]
pub(crate) mod testutil;
