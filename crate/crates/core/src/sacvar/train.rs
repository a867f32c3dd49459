//! Collection / update / evaluation loop.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::Hasher;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, SacError, TrainStepLog};
use crate::env::{self, GoalEnv, GoalObservation};
use crate::livemetrics::{FrameSender, SyncFrame};
use crate::replay::{ReplayBuffer, Transition};

/// Names of every metric `train` emits, in frame key order.
pub const METRIC_NAMES: [&str; 6] = [
    "success_rate",
    "critic_loss",
    "actor_loss",
    "critic_variance_mean",
    "intrinsic_reward_mean",
    "alpha",
];

/// Evaluation episodes are seeded from here on, far from collection seeds.
const EVAL_SEED_OFFSET: u64 = 1_000_000;
/// Stream for replay sampling, independent of the agent's own RNG.
const REPLAY_SEED_OFFSET: u64 = 0x5eed;

/// Destination for scalar metrics.
pub trait MetricSink {
    fn log(&mut self, name: &str, value: f64, step: u64) -> Result<(), String>;
    fn flush(&mut self) -> Result<(), String> {
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl MetricSink for NullSink {
    fn log(&mut self, _: &str, _: f64, _: u64) -> Result<(), String> {
        Ok(())
    }
}

/// Keeps every point in memory, keyed by metric name.
impl MetricSink for BTreeMap<String, Vec<(u64, f64)>> {
    fn log(&mut self, name: &str, value: f64, step: u64) -> Result<(), String> {
        self.entry(name.to_string()).or_default().push((step, value));
        Ok(())
    }
}

impl MetricSink for crate::track::Run {
    fn log(&mut self, name: &str, value: f64, step: u64) -> Result<(), String> {
        crate::track::Run::log(self, name, value, step).map_err(|e| e.to_string())
    }
    fn flush(&mut self) -> Result<(), String> {
        crate::track::Run::flush(self).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub final_success_rate: f64,
    /// (env step, success rate) for every evaluation, in order.
    pub evaluations: Vec<(u64, f64)>,
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
    /// Hash of all parameters after each gradient step.
    pub trajectory: Vec<u64>,
    pub last_log: Option<TrainStepLog>,
}

pub fn parameter_fingerprint(agent: &Agent) -> u64 {
    let mut h = DefaultHasher::new();
    for v in agent.parameter_snapshot() {
        h.write_u64(v.to_bits());
    }
    h.finish()
}

/// Success rate of `policy` over `n_episodes`, episode `k` reset with `seed + k`.
pub fn evaluate_policy<F>(env: &mut dyn GoalEnv, n_episodes: usize, seed: u64, mut policy: F) -> Result<f64, SacError>
where
    F: FnMut(&GoalObservation) -> Result<Vec<f64>, SacError>,
{
    if n_episodes == 0 {
        return Err(SacError::Config("n_episodes must be at least 1".into()));
    }
    let mut successes = 0usize;
    for k in 0..n_episodes {
        let mut obs = env.reset(Some(seed.wrapping_add(k as u64)));
        loop {
            let action = policy(&obs)?;
            let r = env.step(&action)?;
            obs = r.obs;
            if r.done {
                successes += r.is_success as usize;
                break;
            }
        }
    }
    Ok(successes as f64 / n_episodes as f64)
}

/// Deterministic-policy success rate.
pub fn evaluate(agent: &Agent, env: &mut dyn GoalEnv, n_episodes: usize, seed: u64) -> Result<f64, SacError> {
    evaluate_policy(env, n_episodes, seed, |obs| agent.act_deterministic(&obs.policy_input()))
}

struct Emitter<'a> {
    sink: &'a mut dyn MetricSink,
    live: Option<&'a mut FrameSender>,
    latest: BTreeMap<String, f64>,
}

impl Emitter<'_> {
    fn log(&mut self, name: &str, value: f64, step: u64) -> Result<(), SacError> {
        self.latest.insert(name.to_string(), value);
        self.sink.log(name, value, step).map_err(SacError::Sink)
    }

    fn log_update(&mut self, log: &TrainStepLog, step: u64) -> Result<(), SacError> {
        self.log("critic_loss", log.critic_loss, step)?;
        self.log("actor_loss", log.actor_loss, step)?;
        self.log("critic_variance_mean", log.critic_variance_mean, step)?;
        self.log("intrinsic_reward_mean", log.intrinsic_reward_mean, step)?;
        self.log("alpha", log.alpha, step)
    }

    fn frame(&mut self, step: u64, episode: u64, env: &dyn GoalEnv) -> Result<(), SacError> {
        if let Some(tx) = self.live.as_deref_mut() {
            let frame = SyncFrame {
                step,
                episode,
                env_frame: env.render_state(),
                metrics: self.latest.clone(),
            };
            // A vanished viewer must not stop training.
            match tx.emit(frame) {
                Ok(()) | Err(crate::livemetrics::StreamError::Disconnected) => {}
                Err(e) => return Err(SacError::Sink(e.to_string())),
            }
        }
        Ok(())
    }
}

/// Runs `total_steps` environment steps with the agent's config schedule.
///
/// Evaluates at step 0, every `eval_interval` steps and at the end. Update
/// metrics go to `sink` at every step that performed gradient steps; when
/// `live` is attached one frame is emitted per environment step. The sink is
/// flushed on every exit path.
pub fn train(
    agent: &mut Agent,
    env: &mut dyn GoalEnv,
    total_steps: usize,
    sink: &mut dyn MetricSink,
    live: Option<&mut FrameSender>,
) -> Result<TrainOutcome, SacError> {
    let mut latest: BTreeMap<String, f64> = METRIC_NAMES.iter().map(|n| (n.to_string(), 0.0)).collect();
    latest.insert("alpha".into(), agent.alpha());
    let mut em = Emitter { sink, live, latest };
    let result = run_loop(agent, env, total_steps, &mut em);
    let flushed = em.sink.flush().map_err(SacError::Sink);
    let outcome = result?;
    flushed?;
    Ok(outcome)
}

fn run_loop(agent: &mut Agent, env: &mut dyn GoalEnv, total_steps: usize, em: &mut Emitter) -> Result<TrainOutcome, SacError> {
    let cfg = agent.config.clone();
    let spec = env.spec().clone();
    if spec.obs_dim + spec.goal_dim != agent.obs_dim() || spec.action_dim != agent.action_dim() {
        return Err(SacError::Shape(format!(
            "agent expects input {} / action {}, env {} has {} / {}",
            agent.obs_dim(),
            agent.action_dim(),
            spec.name,
            spec.obs_dim + spec.goal_dim,
            spec.action_dim
        )));
    }
    let mut eval_env = env::make(spec.name)?;
    let eval_seed = cfg.seed.wrapping_add(EVAL_SEED_OFFSET);
    let mut replay = ReplayBuffer::new(cfg.buffer_size.max(spec.max_episode_steps));
    let mut replay_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ REPLAY_SEED_OFFSET);
    let her_ratio = if cfg.use_her { cfg.her_ratio } else { 0.0 };
    let threshold = spec.success_threshold;
    let compute_reward = |a: &[f64], d: &[f64]| env::sparse_reward(a, d, threshold).unwrap_or(-1.0);

    let mut outcome = TrainOutcome {
        final_success_rate: 0.0,
        evaluations: Vec::new(),
        env_steps: 0,
        episodes: 0,
        updates: 0,
        trajectory: Vec::new(),
        last_log: None,
    };
    let mut eval = |agent: &Agent, step: u64, em: &mut Emitter, outcome: &mut TrainOutcome| -> Result<(), SacError> {
        let rate = evaluate(agent, eval_env.as_mut(), cfg.eval_episodes, eval_seed)?;
        em.log("success_rate", rate, step)?;
        outcome.evaluations.push((step, rate));
        outcome.final_success_rate = rate;
        Ok(())
    };
    eval(agent, 0, em, &mut outcome)?;

    let mut obs = env.reset(Some(cfg.seed));
    let mut episode: Vec<Transition> = Vec::with_capacity(spec.max_episode_steps);
    for step in 1..=total_steps as u64 {
        let input = obs.policy_input();
        let action: Vec<f64> = if (step as usize) <= cfg.learning_starts {
            (0..spec.action_dim).map(|_| agent.rng_mut().gen_range(-1.0..1.0)).collect()
        } else {
            agent.act(&input)?
        };
        let r = env.step(&action)?;
        episode.push(Transition {
            obs: obs.clone(),
            action,
            reward: r.reward,
            next_obs: r.obs.clone(),
            done: r.is_success,
        });
        obs = r.obs;
        outcome.env_steps = step;
        let episode_index = outcome.episodes;
        if r.done || episode.len() >= spec.max_episode_steps {
            replay.store_episode(std::mem::take(&mut episode))?;
            outcome.episodes += 1;
        }

        if (step as usize) > cfg.learning_starts && step % cfg.train_freq as u64 == 0 && !replay.is_empty() {
            let mut last = None;
            for _ in 0..cfg.gradient_steps {
                let batch = replay.sample_her(cfg.batch_size, her_ratio, compute_reward, &mut replay_rng)?;
                last = Some(agent.train_step(&batch)?);
                outcome.trajectory.push(parameter_fingerprint(agent));
            }
            if let Some(log) = last {
                em.log_update(&log, step)?;
                outcome.last_log = Some(log);
            }
        }
        let is_last = step == total_steps as u64;
        if (cfg.eval_interval > 0 && step % cfg.eval_interval as u64 == 0) || is_last {
            eval(agent, step, em, &mut outcome)?;
        }
        em.frame(step, episode_index, env)?;
        if episode.is_empty() && !is_last {
            obs = env.reset(None);
        }
    }
    outcome.updates = agent.updates();
    Ok(outcome)
}

/// Plays one episode from the env's current state with a fixed controller and
/// records a frame per visited state. Each frame carries the live-critic
/// variance at that state and the action the controller takes there, so the
/// metric and the drawing refer to the same step.
pub fn probe_episode<F>(
    agent: &Agent,
    env: &mut dyn GoalEnv,
    start: GoalObservation,
    mut controller: F,
) -> Result<Vec<SyncFrame>, SacError>
where
    F: FnMut(&GoalObservation) -> Vec<f64>,
{
    let max_steps = env.spec().max_episode_steps as u64;
    let mut frames = Vec::new();
    let mut obs = start;
    let mut done = false;
    for step in 0..=max_steps {
        let action = controller(&obs);
        let var = agent.critic_variance_at(&obs.policy_input(), &action)?;
        frames.push(SyncFrame {
            step,
            episode: 0,
            env_frame: env.render_state(),
            metrics: BTreeMap::from([("critic_variance_mean".to_string(), var)]),
        });
        if done || step == max_steps {
            break;
        }
        let r = env.step(&action)?;
        obs = r.obs;
        done = r.done;
    }
    Ok(frames)
}
