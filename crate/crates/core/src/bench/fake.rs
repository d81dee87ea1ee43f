//! A scripted stand-in for the engine: fixed compute per chunk and words
//! that appear at chosen chunks.

use std::thread;
use std::time::Duration;

use crate::decoder::{Transcript, Word};
use crate::engine::{StreamEnd, StreamProcessor, StreamStats, TranscriptEvent};
use crate::error::Result;
use crate::features::AudioChunk;

#[derive(Debug, Clone)]
pub struct FakeProcessor {
    /// Slept on every push and on close.
    pub chunk_cost: Duration,
    /// (chunk index, word): the word is finalized by that chunk. Indices at
    /// or past the last chunk come out on close.
    pub script: Vec<(usize, String)>,
}

#[derive(Debug, Default)]
pub struct FakeStream {
    chunks: usize,
    emitted: usize,
    sample_rate: u32,
    stats: StreamStats,
}

impl FakeStream {
    fn emit_ms(&self) -> u64 {
        self.stats.samples_in * 1000 / self.sample_rate.max(1) as u64
    }
}

impl FakeProcessor {
    pub fn new(chunk_cost: Duration, script: Vec<(usize, String)>) -> Self {
        Self { chunk_cost, script }
    }

    fn work(&self) -> f64 {
        if !self.chunk_cost.is_zero() {
            thread::sleep(self.chunk_cost);
        }
        self.chunk_cost.as_secs_f64() * 1e3
    }

    fn take(&self, s: &mut FakeStream, upto_chunk: Option<usize>, emit_ms: u64) -> Vec<TranscriptEvent> {
        let mut out = Vec::new();
        while let Some((at, word)) = self.script.get(s.emitted) {
            if upto_chunk.is_some_and(|c| *at > c) {
                break;
            }
            out.push(TranscriptEvent {
                word: word.clone(),
                emit_ms,
                audio_end_ms: None,
                is_final: true,
            });
            s.emitted += 1;
        }
        out
    }
}

impl StreamProcessor for FakeProcessor {
    type Stream = FakeStream;

    fn open(&self) -> Result<FakeStream> {
        Ok(FakeStream::default())
    }

    fn push(&self, s: &mut FakeStream, chunk: &AudioChunk) -> Result<(Vec<TranscriptEvent>, f64)> {
        let ms = self.work();
        s.stats.samples_in += chunk.samples.len() as u64;
        s.stats.chunks += 1;
        s.stats.model_ms += ms;
        s.sample_rate = chunk.sample_rate.max(1);
        let emit_ms = s.emit_ms();
        let events = self.take(s, Some(s.chunks), emit_ms);
        s.chunks += 1;
        Ok((events, 0.0))
    }

    fn close(&self, mut s: FakeStream) -> Result<StreamEnd> {
        s.stats.model_ms += self.work();
        let emit_ms = s.emit_ms();
        let events = self.take(&mut s, None, emit_ms);
        let words = self
            .script
            .iter()
            .map(|(at, w)| Word {
                text: w.clone(),
                frame: *at,
            })
            .collect();
        Ok(StreamEnd {
            transcript: Transcript {
                words,
                score: 0.0,
                acoustic: 0.0,
                lm: 0.0,
            },
            events,
            stats: s.stats,
        })
    }
}
