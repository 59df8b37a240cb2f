pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod micro;
pub mod model;
pub mod rng;
pub mod run;
pub mod selector;
pub mod tensor;
pub mod train;

pub use error::{Error, ErrorKind, Result};
