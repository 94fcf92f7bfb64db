pub mod cli;
pub mod compare;
pub mod config;
pub mod data;
pub mod error;
pub mod layers;
pub mod models;
pub mod params;
pub mod quantum;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
