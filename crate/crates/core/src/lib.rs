pub mod audio;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod sampler;
pub mod schedule;
pub mod sweep;
pub mod toy;
pub mod training;

pub use error::{Error, Result};
