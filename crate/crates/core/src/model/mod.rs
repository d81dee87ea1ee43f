//! TDS acoustic model: declarative spec, analytics, weights, full and
//! streaming forward passes, and the binary model file.

pub mod file;
mod runtime;
mod spec;
mod weights;

pub use runtime::{EmissionMatrix, Model, StreamState};
pub use spec::{LayerSpec, ModelSpec, TdsBlockSpec};
pub use weights::{init_weights, Tensor};
