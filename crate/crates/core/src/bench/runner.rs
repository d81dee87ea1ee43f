use std::io::{self, Write};
use std::time::Instant;

use serde::Serialize;

use super::metrics::{
    compute_rtf, compute_throughput, user_perceived_latency, validate_alignments, EmissionLog, LatencyReport,
    WordAlignment,
};
use super::schedule::{pooled_completion, word_availability, Display, Job, Snapshot};
use crate::engine::{run_concurrent, ConcurrentRun, Engine, Pacing, RunConfig, StreamProcessor};
use crate::error::{Error, Result};
use crate::features::AudioChunk;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub audio: Vec<f32>,
    pub alignment: Vec<WordAlignment>,
}

/// Utterances with reference alignments. A run with N streams gives stream
/// i the utterance i mod len.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub sample_rate: u32,
    pub utterances: Vec<Utterance>,
}

impl Workload {
    pub fn new(sample_rate: u32, utterances: Vec<Utterance>) -> Result<Self> {
        if utterances.is_empty() || sample_rate == 0 {
            return Err(Error::Config("a workload needs audio and a sample rate".into()));
        }
        for u in &utterances {
            validate_alignments(&u.alignment)?;
        }
        Ok(Self {
            sample_rate,
            utterances,
        })
    }

    /// Alignments from the engine's own offline transcript: each word ends
    /// one emission stride after the frame that completed it. Streaming
    /// reproduces offline output exactly, so the transcript always matches.
    pub fn closed_loop(engine: &Engine, audio: Vec<Vec<f32>>) -> Result<Self> {
        let stride = engine.model().stride_ms() as f64;
        let utterances = audio
            .into_iter()
            .map(|audio| {
                let t = engine.transcribe_offline(&audio)?;
                let alignment = t
                    .words
                    .iter()
                    .map(|w| {
                        let end = (w.frame as f64 + 1.0) * stride;
                        WordAlignment::new(w.text.clone(), end - stride, end)
                    })
                    .collect();
                Ok(Utterance { audio, alignment })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(engine.config().sample_rate, utterances)
    }

    fn utterance(&self, stream: usize) -> &Utterance {
        &self.utterances[stream % self.utterances.len()]
    }

    pub fn sources(&self, streams: usize) -> Vec<Vec<f32>> {
        (0..streams).map(|i| self.utterance(i).audio.clone()).collect()
    }

    pub fn audio_s(&self, streams: usize) -> f64 {
        (0..streams)
            .map(|i| self.utterance(i).audio.len() as f64 / self.sample_rate as f64)
            .sum()
    }
}

/// Where per-chunk compute comes from in virtual time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChunkCost {
    /// Wall time of each call, measured one stream at a time.
    Measured,
    /// A constant per call, in ms.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySettings {
    pub chunk_ms: u32,
    pub streams: usize,
    pub workers: usize,
    pub cost: ChunkCost,
}

/// One stream's chunk outputs plus the closing call.
struct Trace {
    jobs: Vec<Job>,
    events: Vec<Vec<String>>,
    final_words: Vec<String>,
}

fn chunk_samples(sample_rate: u32, chunk_ms: u32) -> usize {
    (sample_rate as usize * chunk_ms as usize / 1000).max(1)
}

fn trace_stream<P: StreamProcessor>(
    p: &P,
    audio: &[f32],
    sample_rate: u32,
    chunk_ms: u32,
    cost: ChunkCost,
) -> Result<Trace> {
    let step = chunk_samples(sample_rate, chunk_ms);
    let ms_of = |samples: usize| samples as f64 * 1000.0 / sample_rate as f64;
    let price = |measured: f64| match cost {
        ChunkCost::Measured => measured,
        ChunkCost::Fixed(ms) => ms,
    };
    let mut stream = p.open()?;
    let mut jobs = Vec::new();
    let mut events = Vec::new();
    let mut display = Display::default();
    for (i, part) in audio.chunks(step).enumerate() {
        let t0 = Instant::now();
        let (ev, _) = p.push(&mut stream, &AudioChunk::new(part.to_vec(), sample_rate))?;
        let took = t0.elapsed().as_secs_f64() * 1e3;
        jobs.push(Job {
            release_ms: ms_of(i * step + part.len()),
            cost_ms: price(took),
        });
        events.push(display.apply(&ev).to_vec());
    }
    let t0 = Instant::now();
    let end = p.close(stream)?;
    jobs.push(Job {
        release_ms: ms_of(audio.len()),
        cost_ms: price(t0.elapsed().as_secs_f64() * 1e3),
    });
    let final_words: Vec<String> = end.transcript.words.iter().map(|w| w.text.clone()).collect();
    events.push(final_words.clone());
    Ok(Trace {
        jobs,
        events,
        final_words,
    })
}

/// Mean user-perceived latency over all words of all streams, with chunks
/// released on a simulated real-time clock and completion times derived
/// from per-chunk costs.
pub fn measure_latency<P: StreamProcessor>(
    p: &P,
    workload: &Workload,
    settings: &LatencySettings,
) -> Result<LatencyReport> {
    if settings.streams == 0 || settings.workers == 0 || settings.chunk_ms == 0 {
        return Err(Error::Config("streams, workers and chunk_ms must be positive".into()));
    }
    let traces = (0..settings.streams)
        .map(|i| {
            trace_stream(
                p,
                &workload.utterance(i).audio,
                workload.sample_rate,
                settings.chunk_ms,
                settings.cost,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<Vec<Job>> = traces.iter().map(|t| t.jobs.clone()).collect();
    let done = pooled_completion(&jobs, settings.workers);
    let reports = traces
        .iter()
        .zip(&done)
        .enumerate()
        .map(|(i, (trace, done))| {
            let snapshots: Vec<Snapshot> = done
                .iter()
                .zip(&trace.events)
                .map(|(&at_ms, words)| Snapshot {
                    at_ms,
                    words: words.clone(),
                })
                .collect();
            let available = word_availability(&snapshots, &trace.final_words);
            let log = EmissionLog::new(trace.final_words.iter().cloned().zip(available).collect())?;
            user_perceived_latency(&workload.utterance(i).alignment, &log)
        })
        .collect::<Result<Vec<_>>>()?;
    LatencyReport::pooled(&reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub streams: usize,
    pub chunk_ms: u32,
    pub workers: usize,
    pub audio_s: f64,
    pub wall_s: f64,
    pub throughput: f64,
    pub rtf: f64,
    /// Decoder share of per-chunk compute.
    pub decode_share: f64,
}

/// Runs `streams` streams on the worker pool and times them on the wall
/// clock. RTF counts, per stream, the time it had a chunk waiting or in
/// progress; under pacing both sides are on the accelerated clock.
pub fn measure_throughput<P: StreamProcessor>(
    p: &P,
    workload: &Workload,
    streams: usize,
    config: &RunConfig,
) -> Result<ThroughputReport> {
    let run = run_concurrent(p, &workload.sources(streams), config)?;
    if let Some(Err(e)) = run.ends.iter().find(|e| e.is_err()) {
        return Err(Error::Measurement(format!("a stream failed: {e}")));
    }
    let speed = match config.pacing {
        Pacing::Unpaced => 1.0,
        Pacing::RealTime { speed } => speed,
    };
    let audio_s = workload.audio_s(streams);
    let (busy_ms, compute_ms, decode_ms) = busy_time(&run, streams);
    Ok(ThroughputReport {
        streams,
        chunk_ms: config.chunk_ms,
        workers: config.workers,
        audio_s,
        wall_s: run.wall_ms / 1e3,
        throughput: compute_throughput(audio_s, run.wall_ms / 1e3)?,
        rtf: compute_rtf((busy_ms / 1e3).max(f64::MIN_POSITIVE), audio_s / speed)?,
        decode_share: if compute_ms > 0.0 { decode_ms / compute_ms } else { 0.0 },
    })
}

fn busy_time(run: &ConcurrentRun, streams: usize) -> (f64, f64, f64) {
    let (mut busy, mut compute, mut decode) = (0.0, 0.0, 0.0);
    for s in 0..streams {
        let mut prev_done = 0.0f64;
        for r in run.stream_log(s) {
            busy += r.finished_ms - r.released_ms.max(prev_done);
            compute += r.finished_ms - r.started_ms;
            decode += r.decode_ms;
            prev_done = r.finished_ms;
        }
    }
    (busy, compute, decode)
}

/// The run with the median throughput.
fn median(mut runs: Vec<ThroughputReport>) -> ThroughputReport {
    runs.sort_by(|a, b| a.throughput.total_cmp(&b.throughput));
    runs.swap_remove(runs.len() / 2)
}

/// Throughput with all audio available up front, one stream per utterance
/// and at least one per worker; the median of `repeats` runs.
pub fn estimate_capacity<P: StreamProcessor>(
    p: &P,
    workload: &Workload,
    chunk_ms: u32,
    workers: usize,
    repeats: usize,
) -> Result<f64> {
    let config = RunConfig {
        chunk_ms,
        sample_rate: workload.sample_rate,
        workers,
        pacing: Pacing::Unpaced,
    };
    let streams = workers.max(workload.utterances.len());
    let runs = (0..repeats.max(1))
        .map(|_| measure_throughput(p, workload, streams, &config))
        .collect::<Result<Vec<_>>>()?;
    Ok(median(runs).throughput)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Streams,
    ChunkMs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    /// Held fixed when not swept.
    pub streams: usize,
    pub chunk_ms: u32,
    pub workers: usize,
    pub pacing: Pacing,
    pub latency_cost: ChunkCost,
    /// Wall-clock runs per value; the row reports the median.
    pub repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub streams: usize,
    pub chunk_ms: u32,
    pub workers: usize,
    pub audio_s: f64,
    pub wall_s: f64,
    pub throughput: f64,
    pub rtf: f64,
    /// Empty when the transcript did not match the reference.
    pub latency_ms: Option<f64>,
    pub decode_share: f64,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "axis",
    "value",
    "streams",
    "chunk_ms",
    "workers",
    "audio_s",
    "wall_s",
    "throughput",
    "rtf",
    "latency_ms",
    "decode_share",
];

/// One row per swept value: wall-clock throughput and RTF from the median
/// run, virtual-time latency. Repeats go round the whole list of values so
/// that drift in machine speed spreads over all of them.
pub fn sweep<P: StreamProcessor>(p: &P, workload: &Workload, settings: &SweepSettings) -> Result<Vec<SweepRow>> {
    let points: Vec<(usize, RunConfig)> = settings
        .values
        .iter()
        .map(|&value| {
            let (streams, chunk_ms) = match settings.axis {
                SweepAxis::Streams => (value, settings.chunk_ms),
                SweepAxis::ChunkMs => (settings.streams, value as u32),
            };
            let run = RunConfig {
                chunk_ms,
                sample_rate: workload.sample_rate,
                workers: settings.workers,
                pacing: settings.pacing,
            };
            (streams, run)
        })
        .collect();
    let mut runs: Vec<Vec<ThroughputReport>> = vec![Vec::new(); points.len()];
    for _ in 0..settings.repeats.max(1) {
        for ((streams, run), out) in points.iter().zip(&mut runs) {
            out.push(measure_throughput(p, workload, *streams, run)?);
        }
    }
    settings
        .values
        .iter()
        .zip(points)
        .zip(runs)
        .map(|((&value, (streams, run)), runs)| {
            let t = median(runs);
            let latency = measure_latency(
                p,
                workload,
                &LatencySettings {
                    chunk_ms: run.chunk_ms,
                    streams,
                    workers: settings.workers,
                    cost: settings.latency_cost,
                },
            );
            let latency_ms = match latency {
                Ok(r) => Some(r.mean_ms),
                Err(Error::Measurement(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(SweepRow {
                axis: settings.axis,
                value,
                streams,
                chunk_ms: run.chunk_ms,
                workers: settings.workers,
                audio_s: t.audio_s,
                wall_s: t.wall_s,
                throughput: t.throughput,
                rtf: t.rtf,
                latency_ms,
                decode_share: t.decode_share,
            })
        })
        .collect()
}

/// Header line always, then one line per row.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(io::Error::other(e))
}
