//! Real-time factor, throughput and user-perceived latency, plus the sweeps
//! that trace them against stream count and chunk size.

pub mod fake;
mod metrics;
mod runner;
mod schedule;

pub use fake::FakeProcessor;
pub use metrics::{
    alignments_to_text, compute_rtf, compute_throughput, load_alignments, parse_alignments, user_perceived_latency,
    validate_alignments, EmissionLog, LatencyReport, WordAlignment,
};
pub use runner::{
    estimate_capacity, measure_latency, measure_throughput, sweep, write_csv, ChunkCost, LatencySettings,
    SweepAxis, SweepRow, SweepSettings, ThroughputReport, Utterance, Workload, CSV_COLUMNS,
};
pub use schedule::{pooled_completion, serial_completion, word_availability, Display, Job, Snapshot};
