//! Critic-disagreement bonus and its mixing into the extrinsic reward.

use super::SacError;
use crate::nn::Matrix;

/// Population variance of each row (divides by the number of columns).
pub fn critic_variance(q_values: &Matrix) -> Result<Vec<f64>, SacError> {
    let n = q_values.cols();
    if n < 2 {
        return Err(SacError::Config(format!(
            "critic variance needs at least 2 critics, got {n}"
        )));
    }
    Ok((0..q_values.rows())
        .map(|r| {
            let row = q_values.row(r);
            let mean = row.iter().sum::<f64>() / n as f64;
            row.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / n as f64
        })
        .collect())
}

/// `(v - min) / (max - min)`; a constant (or single-element) input maps to zeros.
pub fn minmax_scale(v: &[f64]) -> Vec<f64> {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; v.len()];
    }
    // clamp guards the last ulp when range is tiny
    v.iter().map(|x| ((x - lo) / range).clamp(0.0, 1.0)).collect()
}

/// `(1 - eta) * extrinsic + eta * intrinsic`, elementwise.
pub fn mix_reward(extrinsic: &[f64], intrinsic: &[f64], eta: f64) -> Result<Vec<f64>, SacError> {
    if extrinsic.len() != intrinsic.len() {
        return Err(SacError::Shape(format!(
            "reward vectors differ in length ({} vs {})",
            extrinsic.len(),
            intrinsic.len()
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(SacError::Config(format!("weight_critic_var must lie in [0, 1], got {eta}")));
    }
    Ok(extrinsic
        .iter()
        .zip(intrinsic)
        .map(|(re, ri)| (1.0 - eta) * re + eta * ri)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_columns_have_zero_variance() {
        let q = Matrix::from_rows(&[[1.5, 1.5, 1.5], [-2.0, -2.0, -2.0]]).unwrap();
        assert_eq!(critic_variance(&q).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn variance_is_population_variance() {
        let q = Matrix::from_rows(&[[1.0, 3.0]]).unwrap();
        assert_eq!(critic_variance(&q).unwrap(), vec![1.0]);
        let q = Matrix::from_rows(&[[0.0, 0.0, 3.0]]).unwrap();
        assert_eq!(critic_variance(&q).unwrap(), vec![2.0]);
    }

    #[test]
    fn single_critic_is_a_config_error() {
        let q = Matrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(critic_variance(&q), Err(SacError::Config(_))));
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_scale(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_scale(&[3.0, 3.0, 3.0]), vec![0.0; 3]);
        assert_eq!(minmax_scale(&[7.0]), vec![0.0]);
    }

    #[test]
    fn mix_examples() {
        let re = [-1.0, 0.0, -1.0];
        let ri = [0.5, 0.2, 1.0];
        assert_eq!(mix_reward(&re, &ri, 0.0).unwrap(), re.to_vec());
        assert_eq!(mix_reward(&re, &ri, 1.0).unwrap(), ri.to_vec());
        assert_eq!(mix_reward(&[-1.0], &[0.5], 0.75).unwrap(), vec![0.125]);
        assert!(mix_reward(&[0.0], &[0.0, 1.0], 0.5).is_err());
        assert!(mix_reward(&[0.0], &[0.0], 1.5).is_err());
    }
}
