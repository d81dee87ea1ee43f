use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

/// Scalar-affine layer normalization over the feature axis of each frame.
///
/// Every row is normalized by its own mean and variance, so frames never
/// influence each other:
/// `y[i][j] = gain * (x[i][j] - mean_i) / sqrt(var_i + eps) + bias`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerNormParams {
    pub gain: f32,
    pub bias: f32,
    pub eps: f32,
}

impl Default for LayerNormParams {
    fn default() -> Self {
        Self {
            gain: 1.0,
            bias: 0.0,
            eps: 1e-5,
        }
    }
}

impl LayerNormParams {
    pub fn forward(&self, input: &Matrix) -> Matrix {
        let mut out = input.clone();
        self.forward_inplace(&mut out);
        out
    }

    pub fn forward_inplace(&self, x: &mut Matrix) {
        for t in 0..x.rows() {
            self.normalize_row(x.row_mut(t));
        }
    }

    fn normalize_row(&self, row: &mut [f32]) {
        if row.is_empty() {
            return;
        }
        // statistics in f64; rows can be thousands wide
        let n = row.len() as f64;
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = row
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let inv = 1.0 / (var + self.eps as f64).sqrt();
        let (g, b) = (self.gain as f64, self.bias as f64);
        for v in row.iter_mut() {
            *v = (g * (*v as f64 - mean) * inv + b) as f32;
        }
    }
}
