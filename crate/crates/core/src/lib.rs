//! Detection of hidden confounding between a treatment and an outcome from
//! observational data gathered in several heterogeneous environments.

pub mod data;
mod dataset;
pub mod detector;
pub mod error;
pub mod graph;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod sweep;

pub use dataset::{EnvBlock, MultiEnvDataset};
pub use error::{Error, Result};
