pub mod bench;
pub mod decoder;
pub mod engine;
pub mod error;
pub mod features;
pub mod model;
pub mod nn;
pub mod toy;

pub use error::{Error, Result};
