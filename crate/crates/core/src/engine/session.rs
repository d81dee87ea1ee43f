use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use crate::decoder::{Decoder, DecoderConfig, DecoderState, Lexicon, NgramLm, PartialTranscript, TokenSet, Transcript};
use crate::error::{Error, Result};
use crate::features::{normalized_features, AudioChunk, FeatureStream, Frontend, FrontendConfig};
use crate::model::{file, Model, StreamState};

/// One line of transcript output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEvent {
    pub word: String,
    /// Audio consumed by the stream when the event was produced.
    pub emit_ms: u64,
    /// Estimated end of the word in the audio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_end_ms: Option<u64>,
    #[serde(rename = "final")]
    pub is_final: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamStats {
    pub samples_in: u64,
    pub feature_frames: usize,
    pub emission_frames: usize,
    pub chunks: usize,
    /// Frontend plus acoustic model time.
    pub model_ms: f64,
    pub decode_ms: f64,
}

/// Result of closing a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamEnd {
    pub transcript: Transcript,
    /// Words not reported as final before the close.
    pub events: Vec<TranscriptEvent>,
    pub stats: StreamStats,
}

/// Per-stream state: frontend, acoustic model and decoder advance together.
#[derive(Debug)]
pub struct StreamSession {
    id: u64,
    features: FeatureStream,
    acoustic: StreamState,
    decoder: DecoderState,
    stats: StreamStats,
    reported_final: usize,
}

impl StreamSession {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn stats(&self) -> StreamStats {
        self.stats
    }

    /// Buffered search and feature state. The finalized transcript is output
    /// and is not counted.
    pub fn heap_bytes(&self) -> usize {
        self.features.heap_bytes() + self.acoustic.heap_bytes() + self.decoder.heap_bytes()
    }
}

#[derive(Debug)]
enum Slot {
    Idle(Box<StreamSession>),
    Busy,
}

#[derive(Debug, Default)]
struct Sessions {
    open: HashMap<u64, Slot>,
    closed: HashSet<u64>,
}

/// The online recognizer. Model, lexicon and LM are shared read-only; each
/// stream's session is owned by one caller at a time.
#[derive(Debug)]
pub struct Engine {
    config: EngineConfig,
    frontend: Frontend,
    model: Arc<Model>,
    decoder: Arc<Decoder>,
    sessions: Mutex<Sessions>,
    next_id: AtomicU64,
}

impl Engine {
    pub fn new(config: EngineConfig, model: Arc<Model>, decoder: Arc<Decoder>) -> Result<Self> {
        config.validate()?;
        let spec = model.spec();
        if decoder.tokens().len() != spec.token_count {
            return Err(Error::Config(format!(
                "model emits {} tokens but the token set has {}",
                spec.token_count,
                decoder.tokens().len()
            )));
        }
        let frontend = Frontend::new(FrontendConfig {
            sample_rate: config.sample_rate,
            hop_ms: spec.frame_ms,
            n_mels: spec.input_dim,
            ..FrontendConfig::default()
        })?;
        Ok(Self {
            config,
            frontend,
            model,
            decoder,
            sessions: Mutex::new(Sessions::default()),
            next_id: AtomicU64::new(1),
        })
    }

    /// Loads model, tokens, lexicon and (optionally) the LM named in the
    /// config.
    pub fn from_config(config: EngineConfig) -> Result<Self> {
        let need = |p: &Option<std::path::PathBuf>, what: &str| {
            p.clone().ok_or_else(|| Error::Config(format!("no {what} path configured")))
        };
        let model = file::load(need(&config.model, "model")?)?;
        let tokens = TokenSet::load(need(&config.tokens, "tokens")?)?;
        let lexicon = Lexicon::load(need(&config.lexicon, "lexicon")?, &tokens)?;
        let lm = config.lm.as_ref().map(NgramLm::load).transpose()?;
        let decoder = Decoder::new(tokens, lexicon, lm, config.decoder())?;
        Self::new(config, Arc::new(model), Arc::new(decoder))
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn decoder(&self) -> &Arc<Decoder> {
        &self.decoder
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn create_stream(&self) -> Result<u64> {
        self.create_stream_with(self.config.decoder())
    }

    /// Opens a stream whose decoder uses `decoder` instead of the engine
    /// settings.
    pub fn create_stream_with(&self, decoder: DecoderConfig) -> Result<u64> {
        let dec_state = self.decoder.start_with(decoder)?;
        let session = StreamSession {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            features: FeatureStream::new(&self.frontend, self.config.normalizer())?,
            acoustic: self.model.start(),
            decoder: dec_state,
            stats: StreamStats::default(),
            reported_final: 0,
        };
        let id = session.id;
        let mut sessions = self.sessions.lock().expect("session table poisoned");
        if sessions.open.len() >= self.config.max_streams {
            return Err(Error::ResourceLimit(format!(
                "{} streams already open",
                sessions.open.len()
            )));
        }
        sessions.open.insert(id, Slot::Idle(Box::new(session)));
        Ok(id)
    }

    fn checkout(&self, id: u64) -> Result<Box<StreamSession>> {
        let mut sessions = self.sessions.lock().expect("session table poisoned");
        if let Some(slot) = sessions.open.get_mut(&id) {
            return match std::mem::replace(slot, Slot::Busy) {
                Slot::Idle(s) => Ok(s),
                Slot::Busy => Err(Error::Input(format!("stream {id} is in use by another caller"))),
            };
        }
        if sessions.closed.contains(&id) {
            Err(Error::ClosedStream(id))
        } else {
            Err(Error::UnknownStream(id))
        }
    }

    fn checkin(&self, session: Box<StreamSession>) {
        let mut sessions = self.sessions.lock().expect("session table poisoned");
        sessions.open.insert(session.id, Slot::Idle(session));
    }

    /// Runs one chunk through frontend, model and decoder. Returns the words
    /// finalized by this chunk and the current tentative words; nothing if
    /// the chunk produced no new emission frames.
    pub fn push_audio(&self, id: u64, chunk: &AudioChunk) -> Result<Vec<TranscriptEvent>> {
        let mut session = self.checkout(id)?;
        let out = self.process(&mut session, chunk);
        self.checkin(session);
        out
    }

    fn process(&self, s: &mut StreamSession, chunk: &AudioChunk) -> Result<Vec<TranscriptEvent>> {
        let t0 = Instant::now();
        let feats = s.features.push(&self.frontend, chunk)?;
        let emissions = self.model.forward_chunk(&mut s.acoustic, &feats)?;
        let t1 = Instant::now();
        s.stats.samples_in += chunk.samples.len() as u64;
        s.stats.feature_frames += feats.rows();
        s.stats.emission_frames += emissions.rows();
        s.stats.chunks += 1;
        let events = if emissions.is_empty() {
            Vec::new()
        } else {
            let partial = self.decoder.decode_chunk(&mut s.decoder, &emissions)?;
            self.events(s, &partial)
        };
        s.stats.model_ms += (t1 - t0).as_secs_f64() * 1e3;
        s.stats.decode_ms += t1.elapsed().as_secs_f64() * 1e3;
        Ok(events)
    }

    fn emit_ms(&self, s: &StreamSession) -> u64 {
        s.stats.samples_in * 1000 / self.config.sample_rate as u64
    }

    fn word_end_ms(&self, frame: usize) -> u64 {
        (frame as u64 + 1) * self.model.stride_ms() as u64
    }

    fn events(&self, s: &mut StreamSession, p: &PartialTranscript) -> Vec<TranscriptEvent> {
        let emit_ms = self.emit_ms(s);
        s.reported_final = p.finalized_count;
        p.newly_finalized
            .iter()
            .map(|w| (w, true))
            .chain(p.tentative.iter().map(|w| (w, false)))
            .map(|(w, is_final)| TranscriptEvent {
                word: w.text.clone(),
                emit_ms,
                audio_end_ms: Some(self.word_end_ms(w.frame)),
                is_final,
            })
            .collect()
    }

    /// Drains the model's lookahead, finalizes the decoder and releases the
    /// stream. A second close fails with [`Error::ClosedStream`].
    pub fn close_stream(&self, id: u64) -> Result<StreamEnd> {
        let mut s = self.checkout(id)?;
        {
            let mut sessions = self.sessions.lock().expect("session table poisoned");
            sessions.open.remove(&id);
            sessions.closed.insert(id);
        }
        let t0 = Instant::now();
        let emissions = self.model.finish(&mut s.acoustic)?;
        let t1 = Instant::now();
        s.stats.emission_frames += emissions.rows();
        self.decoder.decode_chunk(&mut s.decoder, &emissions)?;
        let transcript = self.decoder.finalize(&s.decoder);
        s.stats.model_ms += (t1 - t0).as_secs_f64() * 1e3;
        s.stats.decode_ms += t1.elapsed().as_secs_f64() * 1e3;
        let emit_ms = self.emit_ms(&s);
        let events = transcript.words[s.reported_final.min(transcript.words.len())..]
            .iter()
            .map(|w| TranscriptEvent {
                word: w.text.clone(),
                emit_ms,
                audio_end_ms: Some(self.word_end_ms(w.frame)),
                is_final: true,
            })
            .collect();
        Ok(StreamEnd {
            transcript,
            events,
            stats: s.stats,
        })
    }

    pub fn open_streams(&self) -> usize {
        self.sessions.lock().expect("session table poisoned").open.len()
    }

    /// Heap held by one idle stream.
    pub fn stream_heap_bytes(&self, id: u64) -> Result<usize> {
        let s = self.checkout(id)?;
        let bytes = s.heap_bytes();
        self.checkin(s);
        Ok(bytes)
    }

    /// Heap held by all idle open streams.
    pub fn total_heap_bytes(&self) -> usize {
        let sessions = self.sessions.lock().expect("session table poisoned");
        sessions
            .open
            .values()
            .map(|slot| match slot {
                Slot::Idle(s) => s.heap_bytes(),
                Slot::Busy => 0,
            })
            .sum()
    }

    /// Whole-utterance reference: features for the full signal, one
    /// full-sequence model pass, one decoder call.
    pub fn transcribe_offline(&self, samples: &[f32]) -> Result<Transcript> {
        let feats = normalized_features(&self.frontend, self.config.normalizer(), samples)?;
        let emissions = self.model.forward_full(&feats)?;
        let mut st = self.decoder.start_with(self.config.decoder())?;
        self.decoder.decode_chunk(&mut st, &emissions)?;
        Ok(self.decoder.finalize(&st))
    }

    /// Pushes `samples` in `chunk_ms` pieces, then closes.
    pub fn transcribe_stream(&self, samples: &[f32]) -> Result<(Vec<TranscriptEvent>, StreamEnd)> {
        let id = self.create_stream()?;
        let step = self.chunk_samples();
        let mut events = Vec::new();
        for part in samples.chunks(step) {
            events.extend(self.push_audio(id, &AudioChunk::new(part.to_vec(), self.config.sample_rate))?);
        }
        let end = self.close_stream(id)?;
        events.extend(end.events.iter().cloned());
        Ok((events, end))
    }

    pub fn chunk_samples(&self) -> usize {
        (self.config.sample_rate as usize * self.config.chunk_ms as usize / 1000).max(1)
    }

    pub(crate) fn push_timed(&self, id: u64, chunk: &AudioChunk) -> Result<(Vec<TranscriptEvent>, f64)> {
        let mut session = self.checkout(id)?;
        let before = session.stats.decode_ms;
        let out = self.process(&mut session, chunk);
        let decode = session.stats.decode_ms - before;
        self.checkin(session);
        out.map(|e| (e, decode))
    }
}
