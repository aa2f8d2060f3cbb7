use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Matrix, NumericsError};

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)`. The returned mask holds the
/// per-element multiplier (0 or the scale), so the backward pass is `dX = dY ∘ mask`.
pub fn dropout_forward_rng<R: Rng>(
    x: &Matrix,
    rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Matrix, Matrix), NumericsError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::InvalidRate(rate));
    }
    let (rows, cols) = x.shape();
    if !training || rate == 0.0 {
        return Ok((x.clone(), Matrix::from_vec(rows, cols, vec![1.0; rows * cols])?));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect();
    let y = x
        .as_slice()
        .iter()
        .zip(&mask)
        .map(|(v, m)| v * m)
        .collect();
    Ok((Matrix::from_vec(rows, cols, y)?, Matrix::from_vec(rows, cols, mask)?))
}

/// Seeded variant drawing its mask from ChaCha8 seeded with `seed`.
pub fn dropout_forward(
    x: &Matrix,
    rate: f64,
    seed: u64,
    training: bool,
) -> Result<(Matrix, Matrix), NumericsError> {
    dropout_forward_rng(x, rate, training, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn dropout_backward(d_out: &Matrix, mask: &Matrix) -> Result<Matrix, NumericsError> {
    if d_out.shape() != mask.shape() {
        return Err(NumericsError::ShapeMismatch("dropout mask".into()));
    }
    let data = d_out
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .map(|(g, m)| g * m)
        .collect();
    Matrix::from_vec(d_out.rows(), d_out.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Matrix {
        Matrix::from_vec(1, n, (0..n).map(|i| 1.0 + (i % 7) as f64).collect()).unwrap()
    }

    #[test]
    fn zero_rate_is_identity() {
        let x = ramp(50);
        let (y, mask) = dropout_forward(&x, 0.0, 1, true).unwrap();
        assert_eq!(y, x);
        assert!(mask.as_slice().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn inference_is_identity() {
        let x = ramp(50);
        let (y, _) = dropout_forward(&x, 0.5, 1, false).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn rate_one_rejected() {
        assert!(dropout_forward(&ramp(3), 1.0, 1, true).is_err());
    }

    #[test]
    fn sampling_statistics() {
        let n = 1_000_000;
        let x = ramp(n);
        let (y, _) = dropout_forward(&x, 0.15, 99, true).unwrap();
        let zeroed = y.as_slice().iter().filter(|&&v| v == 0.0).count() as f64 / n as f64;
        assert!((zeroed - 0.15).abs() < 0.002, "zeroed fraction {zeroed}");
        let mx: f64 = x.as_slice().iter().sum::<f64>() / n as f64;
        let my: f64 = y.as_slice().iter().sum::<f64>() / n as f64;
        assert!(((my - mx) / mx).abs() < 0.01);
    }
}
