use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::reward::{critic_variance, minmax_scale, mix_reward};
use super::{Entropy, SacError, SacVarConfig};
use crate::nn::checkpoint::{expect_magic, read_f64, read_mlp, read_u64, write_mlp};
use crate::nn::{checkpoint, gaussian_tanh_mode, AdamState, Matrix, Mlp, NnError, OutputActivation, SquashedSample};
use crate::replay::SampledBatch;

/// Scalars reported by one gradient step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStepLog {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    /// Raw (unscaled) target-critic variance over the batch.
    pub critic_variance_mean: f64,
    pub critic_variance_max: f64,
    /// Mean of the min-max scaled variance, i.e. `r_i`.
    pub intrinsic_reward_mean: f64,
}

/// N live critics `(obs || goal || action) -> Q` with Polyak-averaged targets.
#[derive(Debug, Clone)]
pub struct CriticEnsemble {
    pub critics: Vec<Mlp>,
    pub targets: Vec<Mlp>,
    pub optims: Vec<AdamState>,
}

impl CriticEnsemble {
    pub fn new<R: Rng + ?Sized>(
        n: usize,
        sizes: &[usize],
        lr: f64,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let critics = (0..n)
            .map(|_| Mlp::new(sizes, OutputActivation::Identity, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let targets = critics.clone();
        let optims = critics.iter().map(|c| AdamState::new(c.param_count(), lr)).collect();
        Ok(Self {
            critics,
            targets,
            optims,
        })
    }

    pub fn len(&self) -> usize {
        self.critics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.critics.is_empty()
    }

    /// Live-critic values, one column per critic.
    pub fn q_values(&self, input: &Matrix) -> Result<Matrix, NnError> {
        stack_columns(&self.critics, input)
    }

    /// Target-critic values, one column per critic.
    pub fn target_q_values(&self, input: &Matrix) -> Result<Matrix, NnError> {
        stack_columns(&self.targets, input)
    }
}

fn stack_columns(nets: &[Mlp], input: &Matrix) -> Result<Matrix, NnError> {
    let mut out = Matrix::zeros(input.rows(), nets.len());
    for (j, net) in nets.iter().enumerate() {
        let q = net.predict_batch(input)?;
        for r in 0..input.rows() {
            out.set(r, j, q.get(r, 0));
        }
    }
    Ok(out)
}

/// `target <- (1 - tau) * target + tau * live`, parameter by parameter.
pub fn polyak_update(targets: &mut [Mlp], live: &[Mlp], tau: f64) -> Result<(), NnError> {
    if targets.len() != live.len() {
        return Err(NnError::Shape {
            expected: targets.len(),
            got: live.len(),
        });
    }
    for (t, l) in targets.iter_mut().zip(live) {
        if t.param_count() != l.param_count() {
            return Err(NnError::Shape {
                expected: t.param_count(),
                got: l.param_count(),
            });
        }
        for (tp, lp) in t.params_mut().iter_mut().zip(l.params()) {
            *tp = (1.0 - tau) * *tp + tau * lp;
        }
    }
    Ok(())
}

/// Actor, critic ensemble, temperature and the RNG that drives them.
#[derive(Debug, Clone)]
pub struct Agent {
    pub config: SacVarConfig,
    pub actor: Mlp,
    pub actor_optim: AdamState,
    pub critics: CriticEnsemble,
    log_alpha: f64,
    alpha_optim: Option<AdamState>,
    target_entropy: f64,
    obs_dim: usize,
    action_dim: usize,
    rng: ChaCha8Rng,
    updates: u64,
}

const AGENT_MAGIC: &[u8; 8] = b"GCRLAGT1";

impl Agent {
    /// `obs_dim` counts the full network input (observation plus goal).
    pub fn new(config: SacVarConfig, obs_dim: usize, action_dim: usize) -> Result<Self, SacError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&config.hidden_sizes);
        actor_sizes.push(2 * action_dim);
        let actor = Mlp::new(&actor_sizes, OutputActivation::TanhGaussianHead, &mut rng)?;
        let mut critic_sizes = vec![obs_dim + action_dim];
        critic_sizes.extend(&config.hidden_sizes);
        critic_sizes.push(1);
        let critics = CriticEnsemble::new(config.n_critics, &critic_sizes, config.learning_rate, &mut rng)?;
        let (log_alpha, alpha_optim, target_entropy) = match config.entropy {
            Entropy::Fixed { alpha } => (alpha.ln(), None, -(action_dim as f64)),
            Entropy::Auto {
                initial_alpha,
                target_entropy,
            } => (
                initial_alpha.ln(),
                Some(AdamState::new(1, config.learning_rate)),
                target_entropy.unwrap_or(-(action_dim as f64)),
            ),
        };
        Ok(Self {
            actor_optim: AdamState::new(actor.param_count(), config.learning_rate),
            config,
            actor,
            critics,
            log_alpha,
            alpha_optim,
            target_entropy,
            obs_dim,
            action_dim,
            rng,
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Gradient steps taken so far.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn noise(&mut self, rows: usize) -> Matrix {
        let mut m = Matrix::zeros(rows, self.action_dim);
        for v in m.as_mut_slice() {
            *v = self.rng.sample(StandardNormal);
        }
        m
    }

    /// Stochastic action for exploration.
    pub fn act(&mut self, policy_input: &[f64]) -> Result<Vec<f64>, SacError> {
        let head = Matrix::from_vec(1, policy_input.len(), policy_input.to_vec()).map_err(SacError::Nn)?;
        let head = self.actor.predict_batch(&head)?;
        let noise = self.noise(1);
        Ok(SquashedSample::new(&head, &noise)?.actions.into_vec())
    }

    /// Mean action `tanh(mu)`, no noise.
    pub fn act_deterministic(&self, policy_input: &[f64]) -> Result<Vec<f64>, SacError> {
        let head = self.actor.predict(policy_input)?;
        if head.iter().any(|v| !v.is_finite()) {
            return Err(self.numeric("policy output", &[]));
        }
        Ok(gaussian_tanh_mode(&head))
    }

    /// Live-critic values at one state-action pair.
    pub fn critic_values(&self, policy_input: &[f64], action: &[f64]) -> Result<Vec<f64>, SacError> {
        let mut x = policy_input.to_vec();
        x.extend_from_slice(action);
        let x = Matrix::from_vec(1, x.len(), x)?;
        Ok(self.critics.q_values(&x)?.into_vec())
    }

    /// Population variance of the live critics at one state-action pair.
    pub fn critic_variance_at(&self, policy_input: &[f64], action: &[f64]) -> Result<f64, SacError> {
        let q = self.critic_values(policy_input, action)?;
        let q = Matrix::from_vec(1, q.len(), q)?;
        Ok(critic_variance(&q)?[0])
    }

    /// One gradient step on critics, actor and temperature, then a Polyak
    /// update of the target critics.
    pub fn train_step(&mut self, batch: &SampledBatch) -> Result<TrainStepLog, SacError> {
        let b = batch.len();
        if b == 0 {
            return Err(SacError::Shape("empty batch".into()));
        }
        let bf = b as f64;
        let alpha = self.alpha();
        let cfg = &self.config;
        let (gamma, eta, tau) = (cfg.gamma, cfg.weight_critic_var, cfg.tau);

        // (1) next actions from the current policy
        let next_noise = self.noise(b);
        let next_head = self.actor.predict_batch(&batch.next_observations)?;
        let next = SquashedSample::new(&next_head, &next_noise)?;

        // (2) target critics at (s', a')
        let target_in = batch.next_observations.hcat(&next.actions)?;
        let target_q = self.critics.target_q_values(&target_in)?;
        let next_q: Vec<f64> = (0..b)
            .map(|r| row_min(target_q.row(r)).1 - alpha * next.log_probs[r])
            .collect();

        // (3) intrinsic reward from the same target-critic values
        let variance = critic_variance(&target_q)?;
        let intrinsic = minmax_scale(&variance);

        // (4) reward mixing; the plain-SAC path never touches the intrinsic term
        let reward_mod = if self.config.intrinsic_reward {
            mix_reward(&batch.rewards, &intrinsic, eta)?
        } else {
            batch.rewards.clone()
        };

        // (5) Bellman target, a constant for the critic gradients
        let target: Vec<f64> = (0..b)
            .map(|r| reward_mod[r] + (1.0 - batch.dones[r]) * gamma * next_q[r])
            .collect();
        if target.iter().any(|v| !v.is_finite()) {
            return Err(self.numeric("bellman target", &target));
        }

        // (6) critic regression
        let critic_in = batch.observations.hcat(&batch.actions)?;
        let mut critic_loss = 0.0;
        for j in 0..self.critics.len() {
            let q = self.critics.critics[j].forward_batch(&critic_in)?;
            let mut upstream = Matrix::zeros(b, 1);
            let mut mse = 0.0;
            for r in 0..b {
                let diff = q.get(r, 0) - target[r];
                mse += diff * diff;
                // d/dq of 0.5 * mean(diff^2) summed over critics
                upstream.set(r, 0, diff / bf);
            }
            critic_loss += 0.5 * mse / bf;
            let grads = self.critics.critics[j].backward_batch(&upstream)?.params;
            let critic = &mut self.critics.critics[j];
            self.critics.optims[j].step(critic.params_mut(), &grads)?;
        }
        if !critic_loss.is_finite() {
            return Err(self.numeric("critic loss", &target));
        }

        // (7) actor: minimize alpha * log_pi - min_j Q_j(s, a~pi)
        let noise = self.noise(b);
        let head = self.actor.forward_batch(&batch.observations)?;
        let sample = SquashedSample::new(&head, &noise)?;
        let actor_in = batch.observations.hcat(&sample.actions)?;
        let mut q_pi = Matrix::zeros(b, self.critics.len());
        for j in 0..self.critics.len() {
            let q = self.critics.critics[j].forward_batch(&actor_in)?;
            for r in 0..b {
                q_pi.set(r, j, q.get(r, 0));
            }
        }
        let mut actor_loss = 0.0;
        let mut argmin = vec![0usize; b];
        for r in 0..b {
            let (j, q) = row_min(q_pi.row(r));
            argmin[r] = j;
            actor_loss += (alpha * sample.log_probs[r] - q) / bf;
        }
        if !actor_loss.is_finite() {
            return Err(self.numeric("actor loss", &sample.log_probs));
        }
        let obs_cols = batch.observations.cols();
        let mut d_actions = Matrix::zeros(b, self.action_dim);
        for j in 0..self.critics.len() {
            if !argmin.contains(&j) {
                continue;
            }
            let mut upstream = Matrix::zeros(b, 1);
            for r in 0..b {
                if argmin[r] == j {
                    upstream.set(r, 0, -1.0 / bf);
                }
            }
            let d_in = self.critics.critics[j].backward_input(&upstream)?;
            for r in 0..b {
                for (d, g) in d_actions.row_mut(r).iter_mut().zip(&d_in.row(r)[obs_cols..]) {
                    *d += g;
                }
            }
        }
        let d_log_probs = vec![alpha / bf; b];
        let head_grad = sample.head_grad(&d_actions, &d_log_probs);
        let actor_grads = self.actor.backward_batch(&head_grad)?.params;
        self.actor_optim.step(self.actor.params_mut(), &actor_grads)?;

        // (8) temperature
        if let Some(opt) = self.alpha_optim.as_mut() {
            let mean_lp = sample.log_probs.iter().sum::<f64>() / bf;
            let grad = -(mean_lp + self.target_entropy);
            let mut p = [self.log_alpha];
            opt.step(&mut p, &[grad])?;
            self.log_alpha = p[0];
        }

        // (9) target networks
        polyak_update(&mut self.critics.targets, &self.critics.critics, tau)?;
        self.updates += 1;

        let var_mean = variance.iter().sum::<f64>() / bf;
        let var_max = variance.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(TrainStepLog {
            critic_loss,
            actor_loss,
            alpha,
            critic_variance_mean: var_mean,
            critic_variance_max: var_max,
            intrinsic_reward_mean: intrinsic.iter().sum::<f64>() / bf,
        })
    }

    fn numeric(&self, what: &str, values: &[f64]) -> SacError {
        let norm = |p: &[f64]| p.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut dump = format!("update {}; alpha {}; actor |theta| {}", self.updates, self.alpha(), norm(self.actor.params()));
        for (j, c) in self.critics.critics.iter().enumerate() {
            dump.push_str(&format!("; critic {j} |phi| {}", norm(c.params())));
        }
        let bad = values.iter().filter(|v| !v.is_finite()).count();
        dump.push_str(&format!("; {bad}/{} non-finite entries", values.len()));
        SacError::Numeric {
            what: what.into(),
            dump,
        }
    }

    /// Writes every network and optimizer state plus the temperature.
    ///
    /// Layout: `b"GCRLAGT1"`, u64 critic count N, f64 log-alpha, u8 has-alpha-optimizer,
    /// then the actor network and Adam records, N (critic, target, Adam) record
    /// triples, and the alpha Adam record if present (see [`crate::nn::checkpoint`]).
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), NnError> {
        w.write_all(AGENT_MAGIC)?;
        w.write_all(&(self.critics.len() as u64).to_le_bytes())?;
        w.write_all(&self.log_alpha.to_le_bytes())?;
        w.write_all(&[self.alpha_optim.is_some() as u8])?;
        write_mlp(&self.actor, w)?;
        checkpoint::write_adam(&self.actor_optim, w)?;
        for j in 0..self.critics.len() {
            write_mlp(&self.critics.critics[j], w)?;
            write_mlp(&self.critics.targets[j], w)?;
            checkpoint::write_adam(&self.critics.optims[j], w)?;
        }
        if let Some(opt) = &self.alpha_optim {
            checkpoint::write_adam(opt, w)?;
        }
        Ok(())
    }

    /// Restores state written by [`Agent::save`] into an agent built with a
    /// matching configuration.
    pub fn load<R: Read>(&mut self, r: &mut R) -> Result<(), NnError> {
        expect_magic(r, AGENT_MAGIC)?;
        let n = read_u64(r)? as usize;
        if n != self.critics.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {n} critics, agent has {}",
                self.critics.len()
            )));
        }
        let log_alpha = read_f64(r)?;
        let mut flag = [0u8];
        r.read_exact(&mut flag)?;
        let actor = read_mlp(r)?;
        if actor.layer_sizes() != self.actor.layer_sizes() {
            return Err(NnError::Checkpoint("actor architecture differs".into()));
        }
        let actor_optim = checkpoint::read_adam(r)?;
        let mut critics = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut optims = Vec::with_capacity(n);
        for j in 0..n {
            let c = read_mlp(r)?;
            if c.layer_sizes() != self.critics.critics[j].layer_sizes() {
                return Err(NnError::Checkpoint(format!("critic {j} architecture differs")));
            }
            critics.push(c);
            targets.push(read_mlp(r)?);
            optims.push(checkpoint::read_adam(r)?);
        }
        let alpha_optim = if flag[0] == 1 { Some(checkpoint::read_adam(r)?) } else { None };
        self.log_alpha = log_alpha;
        self.actor = actor;
        self.actor_optim = actor_optim;
        self.critics = CriticEnsemble {
            critics,
            targets,
            optims,
        };
        self.alpha_optim = alpha_optim;
        Ok(())
    }

    /// Every parameter of every network, in a fixed order (actor, critics, targets, log-alpha).
    pub fn parameter_snapshot(&self) -> Vec<f64> {
        let mut v = self.actor.params().to_vec();
        for c in &self.critics.critics {
            v.extend_from_slice(c.params());
        }
        for t in &self.critics.targets {
            v.extend_from_slice(t.params());
        }
        v.push(self.log_alpha);
        v
    }
}

/// (index, value) of the first minimum.
fn row_min(row: &[f64]) -> (usize, f64) {
    let mut best = (0, row[0]);
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (j, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyak_endpoints_and_midpoint() {
        let live = vec![Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap()];
        let mut live = live;
        live[0].params_mut().copy_from_slice(&[2.0, 2.0]);
        let mut targets = vec![Mlp::zeros(&[1, 1], OutputActivation::Identity).unwrap()];
        polyak_update(&mut targets, &live, 0.0).unwrap();
        assert_eq!(targets[0].params(), &[0.0, 0.0]);
        polyak_update(&mut targets, &live, 0.5).unwrap();
        assert_eq!(targets[0].params(), &[1.0, 1.0]);
        polyak_update(&mut targets, &live, 1.0).unwrap();
        assert_eq!(targets[0].params(), live[0].params());
        let wrong = vec![Mlp::zeros(&[2, 1], OutputActivation::Identity).unwrap()];
        assert!(polyak_update(&mut targets, &wrong, 0.5).is_err());
    }

    #[test]
    fn row_min_takes_first_minimum() {
        assert_eq!(row_min(&[3.0, 1.0, 1.0]), (1, 1.0));
        assert_eq!(row_min(&[0.5]), (0, 0.5));
    }
}
