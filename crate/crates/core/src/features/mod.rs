//! Streaming log-mel frontend and causal local normalization.

mod frontend;
mod normalize;
pub mod wav;

pub use frontend::{Frontend, FrontendConfig, FrontendState};
pub use normalize::{NormalizerConfig, NormalizerState, RESYNC_INTERVAL};

use crate::error::Result;
use crate::nn::Matrix;

/// Mono PCM samples in `[-1, 1]`. An empty chunk is a valid heartbeat.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioChunk {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioChunk {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub values: Vec<f32>,
    /// Position in the stream; frames are `hop_ms` apart.
    pub index: usize,
}

/// Frontend plus normalizer state for one stream.
#[derive(Debug, Clone)]
pub struct FeatureStream {
    frontend: FrontendState,
    normalizer: NormalizerState,
}

impl FeatureStream {
    pub fn new(frontend: &Frontend, normalizer: NormalizerConfig) -> Result<Self> {
        Ok(Self {
            frontend: frontend.start(),
            normalizer: NormalizerState::new(frontend.config().n_mels, normalizer)?,
        })
    }

    /// Raw audio in, normalized `frames x n_mels` features out.
    pub fn push(&mut self, frontend: &Frontend, chunk: &AudioChunk) -> Result<Matrix> {
        let raw = frontend.extract_frames(&mut self.frontend, chunk)?;
        let mut out = Matrix::empty(frontend.config().n_mels);
        for f in &raw {
            out.push_row(&self.normalizer.normalize(f)?.values)?;
        }
        Ok(out)
    }

    pub fn frontend_state(&self) -> &FrontendState {
        &self.frontend
    }

    pub fn heap_bytes(&self) -> usize {
        self.frontend.heap_bytes() + self.normalizer.heap_bytes()
    }
}

/// Offline equivalent of [`FeatureStream`]: the whole signal at once.
pub fn normalized_features(
    frontend: &Frontend,
    normalizer: NormalizerConfig,
    samples: &[f32],
) -> Result<Matrix> {
    let mut norm = NormalizerState::new(frontend.config().n_mels, normalizer)?;
    let mut out = Matrix::empty(frontend.config().n_mels);
    for f in frontend.extract_all(samples)? {
        out.push_row(&norm.normalize(&f)?.values)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_matches_offline() {
        let fe = Frontend::new(FrontendConfig::default()).unwrap();
        let audio: Vec<f32> = (0..9000).map(|n| ((n * 7919) % 200) as f32 / 400.0 - 0.25).collect();
        let offline = normalized_features(&fe, NormalizerConfig::default(), &audio).unwrap();
        let mut st = FeatureStream::new(&fe, NormalizerConfig::default()).unwrap();
        let mut got = Matrix::empty(80);
        for part in audio.chunks(1234) {
            got.append(&st.push(&fe, &AudioChunk::new(part.to_vec(), 16_000)).unwrap())
                .unwrap();
        }
        assert_eq!(got, offline);
    }
}
