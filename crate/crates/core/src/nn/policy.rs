//! Tanh-squashed diagonal Gaussian policy head.
//!
//! The head output is `mean || log_std`. With noise `eps ~ N(0, I)`:
//!
//! - `u = mean + exp(log_std) * eps`
//! - `action = tanh(u)`
//! - `log_prob = sum_i [ -eps_i^2 / 2 - log_std_i - ln(2 pi) / 2 - ln(1 - tanh(u_i)^2) ]`
//!
//! The last term is the change of variables through `tanh`; it is evaluated
//! as `2 (ln 2 - u - softplus(-2u))` which stays finite for large `|u|`.

use super::{Matrix, NnError, LOG_STD_MAX, LOG_STD_MIN};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `tanh` rounds to exactly +-1 for `|u| > ~19`; actions stay strictly inside.
const ACTION_BOUND: f64 = 1.0 - f64::EPSILON;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 - tanh(u)^2)`
pub(crate) fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Samples one squashed action from a head output and a noise vector.
pub fn gaussian_tanh_sample(head_output: &[f64], noise: &[f64]) -> Result<(Vec<f64>, f64), NnError> {
    let head = Matrix::from_vec(1, head_output.len(), head_output.to_vec())?;
    let noise = Matrix::from_vec(1, noise.len(), noise.to_vec())?;
    let s = SquashedSample::new(&head, &noise)?;
    Ok((s.actions.into_vec(), s.log_probs[0]))
}

/// Deterministic action `tanh(mean)`.
pub fn gaussian_tanh_mode(head_output: &[f64]) -> Vec<f64> {
    let half = head_output.len() / 2;
    head_output[..half]
        .iter()
        .map(|m| m.tanh().clamp(-ACTION_BOUND, ACTION_BOUND))
        .collect()
}

/// A batch of reparameterized samples, keeping what the backward pass needs.
#[derive(Debug, Clone)]
pub struct SquashedSample {
    pub actions: Matrix,
    pub log_probs: Vec<f64>,
    std: Matrix,
    noise: Matrix,
}

impl SquashedSample {
    pub fn new(head: &Matrix, noise: &Matrix) -> Result<Self, NnError> {
        let dim = head.cols() / 2;
        if !head.cols().is_multiple_of(2) || noise.cols() != dim || noise.rows() != head.rows() {
            return Err(NnError::Shape {
                expected: head.rows() * dim,
                got: noise.rows() * noise.cols(),
            });
        }
        if !head.is_finite() || !noise.is_finite() {
            return Err(NnError::NonFinite("policy head output".into()));
        }
        let batch = head.rows();
        let mut actions = Matrix::zeros(batch, dim);
        let mut std = Matrix::zeros(batch, dim);
        let mut log_probs = vec![0.0; batch];
        for r in 0..batch {
            let h = head.row(r);
            let eps = noise.row(r);
            let mut lp = 0.0;
            for i in 0..dim {
                let log_std = h[dim + i].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let sigma = log_std.exp();
                let u = h[i] + sigma * eps[i];
                actions.set(r, i, u.tanh().clamp(-ACTION_BOUND, ACTION_BOUND));
                std.set(r, i, sigma);
                lp += -0.5 * eps[i] * eps[i] - log_std - HALF_LN_2PI - log_one_minus_tanh_sq(u);
            }
            log_probs[r] = lp;
        }
        Ok(Self {
            actions,
            log_probs,
            std,
            noise: noise.clone(),
        })
    }

    /// Chains gradients of a loss with respect to the actions and to the
    /// log-probabilities back to the head output `mean || log_std`.
    ///
    /// The noise is held fixed (reparameterization).
    pub fn head_grad(&self, d_actions: &Matrix, d_log_probs: &[f64]) -> Matrix {
        let batch = self.actions.rows();
        let dim = self.actions.cols();
        let mut g = Matrix::zeros(batch, 2 * dim);
        for r in 0..batch {
            let dlp = d_log_probs[r];
            for i in 0..dim {
                let a = self.actions.get(r, i);
                // dL/du through the action and through the tanh correction term
                let du = d_actions.get(r, i) * (1.0 - a * a) + dlp * 2.0 * a;
                g.set(r, i, du);
                g.set(r, dim + i, du * self.std.get(r, i) * self.noise.get(r, i) - dlp);
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn zero_mean_zero_noise_gives_zero_action() {
        let (a, _) = gaussian_tanh_sample(&[0.0, 0.0, -1.0, 0.3], &[0.0, 0.0]).unwrap();
        assert_eq!(a, vec![0.0, 0.0]);
    }

    #[test]
    fn actions_strictly_inside_unit_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let mean: f64 = rng.gen_range(-5.0..5.0);
            let log_std: f64 = rng.gen_range(LOG_STD_MIN..LOG_STD_MAX);
            let eps: f64 = rng.sample(StandardNormal);
            let (a, lp) = gaussian_tanh_sample(&[mean, log_std], &[eps]).unwrap();
            assert!(a[0] > -1.0 && a[0] < 1.0, "{a:?}");
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn non_finite_head_rejected() {
        assert!(gaussian_tanh_sample(&[f64::NAN, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn log_prob_matches_density_transform() {
        // p_a(a) = N(atanh(a); mean, sigma) / (1 - a^2)
        let (mean, log_std, eps) = (0.3_f64, -0.4_f64, 0.7_f64);
        let (a, lp) = gaussian_tanh_sample(&[mean, log_std], &[eps]).unwrap();
        let sigma = log_std.exp();
        let u = a[0].atanh();
        let gauss = (-(u - mean).powi(2) / (2.0 * sigma * sigma)).exp()
            / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let density = gauss / (1.0 - a[0] * a[0]);
        assert!((lp - density.ln()).abs() < 1e-6, "{lp} vs {}", density.ln());
    }

    #[test]
    fn stable_correction_matches_direct_form() {
        for &u in &[-3.0_f64, -0.5, 0.0, 0.2, 1.7, 4.0] {
            let direct = (1.0 - u.tanh().powi(2)).ln();
            assert!((log_one_minus_tanh_sq(u) - direct).abs() < 1e-10);
        }
        assert!(log_one_minus_tanh_sq(400.0).is_finite());
    }
}
