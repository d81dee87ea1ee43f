use super::matrix::Matrix;

pub fn relu_inplace(x: &mut Matrix) {
    x.map_inplace(|v| v.max(0.0));
}

/// Per-row log-softmax with max subtraction.
pub fn log_softmax(input: &Matrix) -> Matrix {
    let mut out = input.clone();
    log_softmax_inplace(&mut out);
    out
}

pub fn log_softmax_inplace(x: &mut Matrix) {
    for t in 0..x.rows() {
        let row = x.row_mut(t);
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let sum: f64 = row.iter().map(|&v| ((v - max) as f64).exp()).sum();
        let lse = max as f64 + sum.ln();
        for v in row.iter_mut() {
            *v = (*v as f64 - lse) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uniform_row() {
        let x = Matrix::from_vec(1, 4, vec![7.0; 4]).unwrap();
        let y = log_softmax(&x);
        for &v in y.row(0) {
            assert!((v - 0.25f32.ln()).abs() < 1e-7);
        }
    }

    #[test]
    fn shift_invariant() {
        let x = Matrix::from_vec(1, 3, vec![0.5, -1.0, 2.0]).unwrap();
        let mut shifted = x.clone();
        shifted.map_inplace(|v| v + 4.0);
        let (a, b) = (log_softmax(&x), log_softmax(&shifted));
        assert!(a.max_abs_diff(&b).unwrap() < 1e-6);
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = StdRng::seed_from_u64(9);
        let data = (0..50 * 33).map(|_| rng.gen_range(-20.0..20.0)).collect();
        let y = log_softmax(&Matrix::from_vec(50, 33, data).unwrap());
        for row in y.row_iter() {
            let s: f64 = row.iter().map(|&v| (v as f64).exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn relu_clamps() {
        let mut x = Matrix::from_vec(1, 3, vec![-1.0, 0.0, 2.0]).unwrap();
        relu_inplace(&mut x);
        assert_eq!(x.row(0), &[0.0, 0.0, 2.0]);
    }
}
