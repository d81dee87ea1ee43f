//! The online pipeline: per-stream sessions chaining frontend, acoustic
//! model and decoder, plus a worker pool for many concurrent streams.

mod config;
mod pool;
mod session;

pub use config::EngineConfig;
pub use pool::{run_concurrent, ChunkRecord, ConcurrentRun, Pacing, RunConfig, StreamProcessor};
pub use session::{Engine, StreamEnd, StreamSession, StreamStats, TranscriptEvent};
