pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod numerics;
pub mod records;
pub mod sampler;
pub mod score_net;
pub mod sde;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
