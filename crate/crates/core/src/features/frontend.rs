use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{AudioChunk, FeatureFrame};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub window_ms: u32,
    pub hop_ms: u32,
    pub n_fft: usize,
    pub n_mels: usize,
    pub f_min: f32,
    /// Upper filterbank edge; Nyquist when unset.
    pub f_max: Option<f32>,
    /// Mel energies are clamped to this value before the natural log.
    pub log_floor: f32,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_ms: 25,
            hop_ms: 10,
            n_fft: 512,
            n_mels: 80,
            f_min: 0.0,
            f_max: None,
            log_floor: 1e-10,
        }
    }
}

impl FrontendConfig {
    pub fn window_samples(&self) -> usize {
        (self.sample_rate as u64 * self.window_ms as u64 / 1000) as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as u64 * self.hop_ms as u64 / 1000) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let (win, hop) = (self.window_samples(), self.hop_samples());
        if self.sample_rate == 0 || win == 0 || hop == 0 {
            return Err(Error::Config("sample rate, window and hop must be positive".into()));
        }
        if !(self.sample_rate as u64 * self.window_ms as u64).is_multiple_of(1000)
            || !(self.sample_rate as u64 * self.hop_ms as u64).is_multiple_of(1000)
        {
            return Err(Error::Config(format!(
                "window/hop do not map to whole samples at {} Hz",
                self.sample_rate
            )));
        }
        if self.n_fft < win {
            return Err(Error::Config(format!(
                "n_fft {} shorter than window {win}",
                self.n_fft
            )));
        }
        let nyquist = self.sample_rate as f32 / 2.0;
        let f_max = self.f_max.unwrap_or(nyquist);
        if self.n_mels == 0 || !(0.0..f_max).contains(&self.f_min) || f_max > nyquist {
            return Err(Error::Config(format!(
                "invalid mel range {}..{f_max} Hz with {} filters",
                self.f_min, self.n_mels
            )));
        }
        if self.log_floor.is_nan() || self.log_floor <= 0.0 {
            return Err(Error::Config("log floor must be positive".into()));
        }
        Ok(())
    }

    /// Number of frames single-shot extraction yields for `samples` samples.
    pub fn frame_count(&self, samples: usize) -> usize {
        let win = self.window_samples();
        if samples < win {
            0
        } else {
            (samples - win) / self.hop_samples() + 1
        }
    }
}

fn hz_to_mel(hz: f32) -> f32 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f32) -> f32 {
    700.0 * (10f32.powf(mel / 2595.0) - 1.0)
}

/// Triangular filter restricted to its nonzero FFT bins.
#[derive(Debug, Clone)]
struct MelFilter {
    first_bin: usize,
    weights: Vec<f32>,
}

/// Shared, immutable log-mel filterbank: Hamming window, zero-padded FFT,
/// power spectrum, triangular mel filters, natural log with a floor.
pub struct Frontend {
    config: FrontendConfig,
    window: Vec<f32>,
    filters: Vec<MelFilter>,
    fft: Arc<dyn Fft<f32>>,
}

impl fmt::Debug for Frontend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frontend").field("config", &self.config).finish()
    }
}

/// Per-stream sample carry-over between chunks.
#[derive(Debug, Clone, Default)]
pub struct FrontendState {
    pending: Vec<f32>,
    next_index: usize,
    samples_seen: u64,
}

impl FrontendState {
    pub fn pending_samples(&self) -> usize {
        self.pending.len()
    }

    pub fn frames_emitted(&self) -> usize {
        self.next_index
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn heap_bytes(&self) -> usize {
        self.pending.capacity() * std::mem::size_of::<f32>()
    }
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        config.validate()?;
        let win = config.window_samples();
        let window = (0..win)
            .map(|n| {
                let phase = 2.0 * std::f64::consts::PI * n as f64 / (win - 1).max(1) as f64;
                (0.54 - 0.46 * phase.cos()) as f32
            })
            .collect();
        let filters = Self::mel_filters(&config);
        let fft = FftPlanner::new().plan_fft_forward(config.n_fft);
        Ok(Self {
            config,
            window,
            filters,
            fft,
        })
    }

    fn mel_filters(config: &FrontendConfig) -> Vec<MelFilter> {
        let sr = config.sample_rate as f32;
        let f_max = config.f_max.unwrap_or(sr / 2.0);
        let (mel_lo, mel_hi) = (hz_to_mel(config.f_min), hz_to_mel(f_max));
        let edges: Vec<f32> = (0..config.n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f32 / (config.n_mels + 1) as f32))
            .collect();
        let n_bins = config.n_fft / 2 + 1;
        let bin_hz = sr / config.n_fft as f32;
        (0..config.n_mels)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let weights: Vec<(usize, f32)> = (0..n_bins)
                    .filter_map(|k| {
                        let f = k as f32 * bin_hz;
                        let w = if f > lo && f <= center {
                            (f - lo) / (center - lo)
                        } else if f > center && f < hi {
                            (hi - f) / (hi - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                match (weights.first(), weights.last()) {
                    (Some(&(first, _)), Some(&(last, _))) => {
                        let mut dense = vec![0.0; last - first + 1];
                        for (k, w) in weights {
                            dense[k - first] = w;
                        }
                        MelFilter {
                            first_bin: first,
                            weights: dense,
                        }
                    }
                    _ => MelFilter {
                        first_bin: 0,
                        weights: Vec::new(),
                    },
                }
            })
            .collect()
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn start(&self) -> FrontendState {
        FrontendState::default()
    }

    /// Log-mel energies of one window of `window_samples` samples.
    pub fn compute_frame(&self, samples: &[f32]) -> Vec<f32> {
        debug_assert_eq!(samples.len(), self.window.len());
        let mut buf = vec![Complex32::new(0.0, 0.0); self.config.n_fft];
        for ((b, &s), &w) in buf.iter_mut().zip(samples).zip(&self.window) {
            b.re = s * w;
        }
        self.fft.process(&mut buf);
        let power: Vec<f32> = buf[..self.config.n_fft / 2 + 1]
            .iter()
            .map(|c| c.re * c.re + c.im * c.im)
            .collect();
        self.filters
            .iter()
            .map(|f| {
                let energy: f32 = f
                    .weights
                    .iter()
                    .zip(&power[f.first_bin..])
                    .map(|(w, p)| w * p)
                    .sum();
                energy.max(self.config.log_floor).ln()
            })
            .collect()
    }

    fn check_chunk(&self, chunk: &AudioChunk) -> Result<()> {
        if chunk.sample_rate != self.config.sample_rate {
            return Err(Error::Config(format!(
                "chunk sample rate {} does not match stream rate {}",
                chunk.sample_rate, self.config.sample_rate
            )));
        }
        if chunk.samples.iter().any(|s| s.is_nan()) {
            return Err(Error::Input("audio chunk contains NaN samples".into()));
        }
        Ok(())
    }

    /// Emits one raw frame per complete window; leftover samples stay in
    /// `state` for the next chunk.
    pub fn extract_frames(
        &self,
        state: &mut FrontendState,
        chunk: &AudioChunk,
    ) -> Result<Vec<FeatureFrame>> {
        self.check_chunk(chunk)?;
        if chunk.samples.is_empty() {
            return Ok(Vec::new());
        }
        state.pending.extend_from_slice(&chunk.samples);
        state.samples_seen += chunk.samples.len() as u64;
        let (win, hop) = (self.config.window_samples(), self.config.hop_samples());
        let mut frames = Vec::new();
        let mut offset = 0;
        while offset + win <= state.pending.len() {
            frames.push(FeatureFrame {
                values: self.compute_frame(&state.pending[offset..offset + win]),
                index: state.next_index,
            });
            state.next_index += 1;
            offset += hop;
        }
        state.pending.drain(..offset);
        Ok(frames)
    }

    /// Single-shot extraction over a whole signal.
    pub fn extract_all(&self, samples: &[f32]) -> Result<Vec<FeatureFrame>> {
        self.check_chunk(&AudioChunk {
            samples: Vec::new(),
            sample_rate: self.config.sample_rate,
        })?;
        if samples.iter().any(|s| s.is_nan()) {
            return Err(Error::Input("audio contains NaN samples".into()));
        }
        let (win, hop) = (self.config.window_samples(), self.config.hop_samples());
        Ok((0..self.config.frame_count(samples.len()))
            .map(|i| FeatureFrame {
                values: self.compute_frame(&samples[i * hop..i * hop + win]),
                index: i,
            })
            .collect())
    }
}
