use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Row-wise affine map `y = W x + b` with `W` stored `[out][in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        if weight.len() != in_dim * out_dim {
            return Err(Error::Shape(format!(
                "linear weight has {} values, expected {out_dim}x{in_dim}",
                weight.len()
            )));
        }
        if bias.len() != out_dim {
            return Err(Error::Shape(format!(
                "linear bias has {} values, expected {out_dim}",
                bias.len()
            )));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim {
            return Err(Error::Shape(format!(
                "linear expects width {}, got {}",
                self.in_dim,
                input.cols()
            )));
        }
        let mut out = Matrix::zeros(input.rows(), self.out_dim);
        for (t, x) in input.row_iter().enumerate() {
            let y = out.row_mut(t);
            for (o, yo) in y.iter_mut().enumerate() {
                let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                *yo = dot(w, x) + self.bias[o];
            }
        }
        Ok(out)
    }
}

/// Dot product with eight independent accumulators so the compiler can
/// vectorize; the summation order is fixed, so results are deterministic.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (x, y) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_noop() {
        let lin = Linear::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let x = Matrix::from_vec(2, 2, vec![3.0, -4.0, 0.5, 7.0]).unwrap();
        assert_eq!(lin.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_multiply() {
        let lin = Linear::new(2, 2, vec![1.0, 1.0, 1.0, -1.0], vec![0.0, 0.0]).unwrap();
        let x = Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(lin.forward(&x).unwrap().row(0), &[3.0, -1.0]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let lin = Linear::new(3, 2, vec![0.0; 6], vec![0.25, -2.0]).unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let y = lin.forward(&x).unwrap();
        assert!(y.row_iter().all(|r| r == [0.25, -2.0]));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(Linear::new(2, 2, vec![0.0; 3], vec![0.0; 2]).is_err());
        let lin = Linear::new(2, 2, vec![0.0; 4], vec![0.0; 2]).unwrap();
        assert!(lin.forward(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn dot_matches_f64_sum() {
        let a: Vec<f32> = (0..37).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..37).map(|i| (i as f32 * 0.11).cos()).collect();
        let want: f64 = a.iter().zip(&b).map(|(x, y)| *x as f64 * *y as f64).sum();
        assert!((dot(&a, &b) as f64 - want).abs() < 1e-5);
    }
}
