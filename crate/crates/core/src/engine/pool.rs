//! Fixed-size worker pool over many streams.
//!
//! Every stream has at most one chunk in flight, so its chunks run strictly
//! in order; different streams interleave freely. Chunks can be released on
//! a paced clock to emulate live audio.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use super::session::{Engine, StreamEnd, TranscriptEvent};
use crate::error::{Error, Result};
use crate::features::AudioChunk;

/// Something that turns audio chunks into transcript events, one stream at
/// a time per handle.
pub trait StreamProcessor: Sync {
    type Stream: Send;

    fn open(&self) -> Result<Self::Stream>;

    /// Events and the part of the call spent decoding, in ms.
    fn push(&self, stream: &mut Self::Stream, chunk: &AudioChunk) -> Result<(Vec<TranscriptEvent>, f64)>;

    fn close(&self, stream: Self::Stream) -> Result<StreamEnd>;
}

impl StreamProcessor for Engine {
    type Stream = u64;

    fn open(&self) -> Result<u64> {
        self.create_stream()
    }

    fn push(&self, stream: &mut u64, chunk: &AudioChunk) -> Result<(Vec<TranscriptEvent>, f64)> {
        self.push_timed(*stream, chunk)
    }

    fn close(&self, stream: u64) -> Result<StreamEnd> {
        self.close_stream(stream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pacing {
    /// All audio is available at time zero.
    Unpaced,
    /// A chunk becomes available once its audio would have been recorded,
    /// on a clock running `speed` times faster than real time.
    RealTime { speed: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub chunk_ms: u32,
    pub sample_rate: u32,
    pub workers: usize,
    pub pacing: Pacing,
}

/// One processed chunk. Times are ms since the run started; the closing
/// flush is logged as a chunk with `flush` set.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkRecord {
    pub stream: usize,
    pub chunk: usize,
    pub flush: bool,
    /// Stream audio covered once this chunk is in.
    pub audio_end_ms: f64,
    pub released_ms: f64,
    pub started_ms: f64,
    pub finished_ms: f64,
    pub decode_ms: f64,
    pub events: Vec<TranscriptEvent>,
}

#[derive(Debug)]
pub struct ConcurrentRun {
    pub ends: Vec<Result<StreamEnd>>,
    /// In completion order.
    pub log: Vec<ChunkRecord>,
    pub wall_ms: f64,
}

impl ConcurrentRun {
    /// Records of one stream, in chunk order.
    pub fn stream_log(&self, stream: usize) -> Vec<&ChunkRecord> {
        let mut recs: Vec<&ChunkRecord> = self.log.iter().filter(|r| r.stream == stream).collect();
        recs.sort_by_key(|r| r.chunk);
        recs
    }
}

struct Schedule<S> {
    /// (release time in us, stream, chunk)
    ready: BinaryHeap<Reverse<(u64, usize, usize)>>,
    /// `None` while the stream's chunk is in flight or after it ended.
    streams: Vec<Option<S>>,
    ends: Vec<Option<Result<StreamEnd>>>,
    /// Decode time of each stream's pushes so far.
    decoded_ms: Vec<f64>,
    remaining: usize,
}

/// Processes every source on `workers` threads and returns each stream's
/// result plus a timing log.
pub fn run_concurrent<P: StreamProcessor>(
    processor: &P,
    sources: &[Vec<f32>],
    config: &RunConfig,
) -> Result<ConcurrentRun> {
    if config.workers == 0 || config.chunk_ms == 0 || config.sample_rate == 0 {
        return Err(Error::Config("workers, chunk_ms and sample_rate must be positive".into()));
    }
    if let Pacing::RealTime { speed } = config.pacing {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::Config("pacing speed must be positive".into()));
        }
    }
    let chunk_samples = (config.sample_rate as usize * config.chunk_ms as usize / 1000).max(1);
    let n_chunks: Vec<usize> = sources.iter().map(|s| s.len().div_ceil(chunk_samples)).collect();
    let audio_end_ms = |stream: usize, chunk: usize| -> f64 {
        let samples = ((chunk + 1) * chunk_samples).min(sources[stream].len());
        samples as f64 * 1000.0 / config.sample_rate as f64
    };
    let release_us = |stream: usize, chunk: usize| -> u64 {
        match config.pacing {
            Pacing::Unpaced => 0,
            Pacing::RealTime { speed } => (audio_end_ms(stream, chunk) * 1000.0 / speed).round() as u64,
        }
    };

    let mut streams = Vec::with_capacity(sources.len());
    let mut ends = Vec::with_capacity(sources.len());
    let mut ready = BinaryHeap::new();
    for i in 0..sources.len() {
        match processor.open() {
            Ok(h) => {
                streams.push(Some(h));
                ends.push(None);
                ready.push(Reverse((release_us(i, 0), i, 0)));
            }
            Err(e) => {
                streams.push(None);
                ends.push(Some(Err(e)));
            }
        }
    }
    let remaining = ready.len();
    let schedule = Mutex::new(Schedule {
        ready,
        streams,
        ends,
        decoded_ms: vec![0.0; sources.len()],
        remaining,
    });
    let wake = Condvar::new();
    let log = Mutex::new(Vec::new());
    let t0 = Instant::now();
    let now_us = || t0.elapsed().as_micros() as u64;

    thread::scope(|scope| {
        for _ in 0..config.workers {
            scope.spawn(|| {
                let mut sched = schedule.lock().expect("schedule poisoned");
                loop {
                    if sched.remaining == 0 {
                        wake.notify_all();
                        return;
                    }
                    let Some(&Reverse((release, stream, chunk))) = sched.ready.peek() else {
                        sched = wake.wait(sched).expect("schedule poisoned");
                        continue;
                    };
                    let now = now_us();
                    if release > now {
                        sched = wake
                            .wait_timeout(sched, Duration::from_micros(release - now))
                            .expect("schedule poisoned")
                            .0;
                        continue;
                    }
                    sched.ready.pop();
                    let mut handle = sched.streams[stream].take().expect("one chunk in flight per stream");
                    drop(sched);

                    let started = now_us();
                    let flush = chunk == n_chunks[stream];
                    let (events, decode_ms, outcome) = if flush {
                        match processor.close(handle) {
                            Ok(end) => {
                                let ev = end.events.clone();
                                let before = schedule.lock().expect("schedule poisoned").decoded_ms[stream];
                                let d = (end.stats.decode_ms - before).max(0.0);
                                (ev, d, Some(Ok(end)))
                            }
                            Err(e) => (Vec::new(), 0.0, Some(Err(e))),
                        }
                    } else {
                        let lo = chunk * chunk_samples;
                        let hi = (lo + chunk_samples).min(sources[stream].len());
                        let audio = AudioChunk::new(sources[stream][lo..hi].to_vec(), config.sample_rate);
                        match processor.push(&mut handle, &audio) {
                            Ok((ev, d)) => {
                                let mut sched = schedule.lock().expect("schedule poisoned");
                                sched.streams[stream] = Some(handle);
                                sched.decoded_ms[stream] += d;
                                (ev, d, None)
                            }
                            Err(e) => {
                                // the stream is abandoned; release it
                                let _ = processor.close(handle);
                                (Vec::new(), 0.0, Some(Err(e)))
                            }
                        }
                    };
                    let finished = now_us();
                    log.lock().expect("log poisoned").push(ChunkRecord {
                        stream,
                        chunk,
                        flush,
                        audio_end_ms: audio_end_ms(stream, chunk),
                        released_ms: release as f64 / 1e3,
                        started_ms: started as f64 / 1e3,
                        finished_ms: finished as f64 / 1e3,
                        decode_ms,
                        events,
                    });

                    sched = schedule.lock().expect("schedule poisoned");
                    match outcome {
                        Some(result) => {
                            sched.ends[stream] = Some(result);
                            sched.remaining -= 1;
                        }
                        None => {
                            let next = chunk + 1;
                            sched.ready.push(Reverse((release_us(stream, next), stream, next)));
                        }
                    }
                    wake.notify_all();
                }
            });
        }
    });

    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    let sched = schedule.into_inner().expect("schedule poisoned");
    let ends = sched
        .ends
        .into_iter()
        .map(|e| e.expect("every stream finished"))
        .collect();
    Ok(ConcurrentRun {
        ends,
        log: log.into_inner().expect("log poisoned"),
        wall_ms,
    })
}
