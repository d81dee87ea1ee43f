use serde::{Deserialize, Serialize};

use super::FeatureFrame;
use crate::error::{Error, Result};

/// Running sums are rebuilt from the ring buffer this often to bound drift.
pub const RESYNC_INTERVAL: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizerConfig {
    /// Frames in the window, the current frame included.
    pub window: usize,
    pub eps: f32,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self {
            window: 300,
            eps: 1e-5,
        }
    }
}

/// Causal per-dimension mean/variance normalization over the current frame
/// and up to `window - 1` previous ones.
#[derive(Debug, Clone)]
pub struct NormalizerState {
    config: NormalizerConfig,
    dim: usize,
    /// Flat ring of `window * dim` values; `head` is the oldest slot.
    ring: Vec<f32>,
    head: usize,
    len: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    pushes: u64,
}

impl NormalizerState {
    pub fn new(dim: usize, config: NormalizerConfig) -> Result<Self> {
        if config.window == 0 || dim == 0 {
            return Err(Error::Config("normalizer window and dim must be positive".into()));
        }
        if config.eps.is_nan() || config.eps <= 0.0 {
            return Err(Error::Config("normalizer eps must be positive".into()));
        }
        Ok(Self {
            config,
            dim,
            ring: vec![0.0; config.window * dim],
            head: 0,
            len: 0,
            sum: vec![0.0; dim],
            sum_sq: vec![0.0; dim],
            pushes: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn slot(&self, i: usize) -> &[f32] {
        let idx = (self.head + i) % self.config.window;
        &self.ring[idx * self.dim..(idx + 1) * self.dim]
    }

    fn push(&mut self, values: &[f32]) {
        let window = self.config.window;
        let dst = if self.len == window {
            let old = self.head;
            for d in 0..self.dim {
                let v = self.ring[old * self.dim + d] as f64;
                self.sum[d] -= v;
                self.sum_sq[d] -= v * v;
            }
            self.head = (self.head + 1) % window;
            old
        } else {
            self.len += 1;
            (self.head + self.len - 1) % window
        };
        self.ring[dst * self.dim..(dst + 1) * self.dim].copy_from_slice(values);
        for (d, &v) in values.iter().enumerate() {
            let v = v as f64;
            self.sum[d] += v;
            self.sum_sq[d] += v * v;
        }
        self.pushes += 1;
        if self.pushes.is_multiple_of(RESYNC_INTERVAL) {
            self.resync();
        }
    }

    fn resync(&mut self) {
        let (sum, sum_sq) = self.exact_sums();
        self.sum = sum;
        self.sum_sq = sum_sq;
    }

    fn exact_sums(&self) -> (Vec<f64>, Vec<f64>) {
        let mut sum = vec![0.0; self.dim];
        let mut sum_sq = vec![0.0; self.dim];
        for i in 0..self.len {
            for (d, &v) in self.slot(i).iter().enumerate() {
                sum[d] += v as f64;
                sum_sq[d] += v as f64 * v as f64;
            }
        }
        (sum, sum_sq)
    }

    /// Largest relative gap between the running sums and a recomputation.
    pub fn drift(&self) -> f64 {
        let (sum, sum_sq) = self.exact_sums();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        sum.iter()
            .zip(&self.sum)
            .chain(sum_sq.iter().zip(&self.sum_sq))
            .map(|(&exact, &running)| rel(running, exact))
            .fold(0.0, f64::max)
    }

    /// Adds `frame` to the window, then normalizes it against the window.
    pub fn normalize(&mut self, frame: &FeatureFrame) -> Result<FeatureFrame> {
        if frame.values.len() != self.dim {
            return Err(Error::Shape(format!(
                "normalizer expects {} dims, got {}",
                self.dim,
                frame.values.len()
            )));
        }
        self.push(&frame.values);
        let n = self.len as f64;
        let eps = self.config.eps as f64;
        let values = frame
            .values
            .iter()
            .enumerate()
            .map(|(d, &x)| {
                let mean = self.sum[d] / n;
                let var = (self.sum_sq[d] / n - mean * mean).max(0.0);
                ((x as f64 - mean) / (var + eps).sqrt()) as f32
            })
            .collect();
        Ok(FeatureFrame {
            values,
            index: frame.index,
        })
    }

    pub fn heap_bytes(&self) -> usize {
        self.ring.capacity() * std::mem::size_of::<f32>()
            + (self.sum.capacity() + self.sum_sq.capacity()) * std::mem::size_of::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn frame(values: Vec<f32>, index: usize) -> FeatureFrame {
        FeatureFrame { values, index }
    }

    /// Two-pass f64 statistics over frames `max(0, t-n+1)..=t`.
    fn sliding_oracle(frames: &[Vec<f32>], n: usize, eps: f64) -> Vec<Vec<f64>> {
        (0..frames.len())
            .map(|t| {
                let win = &frames[(t + 1).saturating_sub(n)..=t];
                (0..frames[t].len())
                    .map(|d| {
                        let m = win.iter().map(|f| f[d] as f64).sum::<f64>() / win.len() as f64;
                        let v = win.iter().map(|f| (f[d] as f64 - m).powi(2)).sum::<f64>()
                            / win.len() as f64;
                        (frames[t][d] as f64 - m) / (v + eps).sqrt()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn first_frame_is_zero() {
        let mut st = NormalizerState::new(3, NormalizerConfig::default()).unwrap();
        let out = st.normalize(&frame(vec![-4.0, 1.5, 20.0], 0)).unwrap();
        assert_eq!(out.values, vec![0.0; 3]);
    }

    #[test]
    fn constant_stream_is_zero() {
        let mut st = NormalizerState::new(4, NormalizerConfig::default()).unwrap();
        for i in 0..700 {
            let out = st.normalize(&frame(vec![-23.025_85, 0.1, 7.3, 0.0], i)).unwrap();
            assert!(out.values.iter().all(|v| v.abs() < 1e-6), "{:?}", out.values);
        }
    }

    #[test]
    fn matches_sliding_window_oracle() {
        let mut rng = StdRng::seed_from_u64(11);
        let frames: Vec<Vec<f32>> = (0..500)
            .map(|_| (0..8).map(|_| rng.gen_range(-25.0..5.0)).collect())
            .collect();
        let want = sliding_oracle(&frames, 300, 1e-5);
        let mut st = NormalizerState::new(8, NormalizerConfig::default()).unwrap();
        let mut max_diff = 0.0f64;
        for (t, f) in frames.iter().enumerate() {
            let got = st.normalize(&frame(f.clone(), t)).unwrap();
            for (g, w) in got.values.iter().zip(&want[t]) {
                max_diff = max_diff.max((*g as f64 - w).abs());
            }
        }
        assert!(max_diff < 1e-6, "max diff {max_diff}");
    }

    #[test]
    fn resync_keeps_sums_exact() {
        let cfg = NormalizerConfig { window: 7, eps: 1e-5 };
        let mut st = NormalizerState::new(2, cfg).unwrap();
        let mut rng = StdRng::seed_from_u64(5);
        for i in 0..(RESYNC_INTERVAL as usize + 13) {
            st.normalize(&frame(vec![rng.gen_range(-1e3..1e3), rng.gen_range(-1.0..1.0)], i))
                .unwrap();
            assert!(st.drift() < 1e-5);
            if (i as u64 + 1).is_multiple_of(RESYNC_INTERVAL) {
                assert_eq!(st.drift(), 0.0);
            }
        }
        assert_eq!(st.len(), 7);
    }

    #[test]
    fn rejects_bad_config_and_width() {
        assert!(NormalizerState::new(3, NormalizerConfig { window: 0, eps: 1e-5 }).is_err());
        assert!(NormalizerState::new(3, NormalizerConfig { window: 3, eps: 0.0 }).is_err());
        let mut st = NormalizerState::new(3, NormalizerConfig::default()).unwrap();
        assert!(st.normalize(&frame(vec![1.0], 0)).is_err());
    }

    proptest! {
        #[test]
        fn output_depends_only_on_window(seed in any::<u64>(), n in 1usize..6, t in 0usize..20) {
            let mut rng = StdRng::seed_from_u64(seed);
            let frames: Vec<Vec<f32>> = (0..20).map(|_| vec![rng.gen_range(-3.0..3.0)]).collect();
            let run = |fs: &[Vec<f32>]| {
                let mut st = NormalizerState::new(1, NormalizerConfig { window: n, eps: 1e-5 }).unwrap();
                fs.iter().enumerate().map(|(i, f)| st.normalize(&frame(f.clone(), i)).unwrap().values[0]).collect::<Vec<_>>()
            };
            let base = run(&frames);
            let mut perturbed = frames.clone();
            // frames outside max(0, t-n+1)..=t
            for (u, f) in perturbed.iter_mut().enumerate() {
                if u + n <= t || u > t {
                    f[0] += 10.0;
                }
            }
            let later = run(&perturbed);
            prop_assert!((base[t] - later[t]).abs() < 1e-5);
        }
    }
}
