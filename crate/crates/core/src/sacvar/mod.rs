//! Soft actor-critic with an N-critic ensemble and a variance-based
//! intrinsic reward.
//!
//! Each gradient step computes the population variance of the N target
//! critics at the bootstrapped next state-action pair, min-max scales it
//! over the batch into `r_i`, and mixes it with the extrinsic reward as
//! `(1 - eta) * r_e + eta * r_i` before forming the Bellman target.

mod agent;
mod reward;
mod train;

pub use agent::{polyak_update, Agent, CriticEnsemble, TrainStepLog};
use crate::config::{ConfigError, ConfigTree, Value};

pub use reward::{critic_variance, minmax_scale, mix_reward};
pub use train::{
    evaluate, evaluate_policy, parameter_fingerprint, probe_episode, train, MetricSink, NullSink, TrainOutcome, METRIC_NAMES,
};

#[derive(Debug, thiserror::Error)]
pub enum SacError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("shape: {0}")]
    Shape(String),
    #[error("non-finite {what}{}", if dump.is_empty() { String::new() } else { format!(" [{dump}]") })]
    Numeric { what: String, dump: String },
    #[error(transparent)]
    Nn(crate::nn::NnError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Replay(#[from] crate::replay::ReplayError),
    #[error("metric sink: {0}")]
    Sink(String),
}

impl From<crate::nn::NnError> for SacError {
    fn from(e: crate::nn::NnError) -> Self {
        match e {
            crate::nn::NnError::NonFinite(what) => SacError::Numeric {
                what,
                dump: String::new(),
            },
            other => SacError::Nn(other),
        }
    }
}

/// Entropy temperature handling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entropy {
    Fixed { alpha: f64 },
    /// Learns `log alpha` toward `target_entropy` (defaults to `-action_dim`).
    Auto {
        initial_alpha: f64,
        target_entropy: Option<f64>,
    },
}

/// Everything a training run needs besides the environment.
#[derive(Debug, Clone, PartialEq)]
pub struct SacVarConfig {
    /// Mixing weight `eta` of the intrinsic reward.
    pub weight_critic_var: f64,
    /// When false the intrinsic term is never mixed in (plain SAC).
    pub intrinsic_reward: bool,
    pub gamma: f64,
    pub tau: f64,
    pub n_critics: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub entropy: Entropy,
    pub buffer_size: usize,
    pub use_her: bool,
    pub her_ratio: f64,
    pub learning_starts: usize,
    pub train_freq: usize,
    pub gradient_steps: usize,
    pub total_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl Default for SacVarConfig {
    fn default() -> Self {
        Self {
            weight_critic_var: 0.0,
            intrinsic_reward: true,
            gamma: 0.95,
            tau: 0.05,
            n_critics: 2,
            learning_rate: 1e-3,
            batch_size: 64,
            hidden_sizes: vec![64, 64],
            entropy: Entropy::Auto {
                initial_alpha: 0.1,
                target_entropy: None,
            },
            buffer_size: 100_000,
            use_her: true,
            her_ratio: 0.8,
            learning_starts: 1000,
            train_freq: 1,
            gradient_steps: 1,
            total_steps: 20_000,
            eval_interval: 2000,
            eval_episodes: 10,
            seed: 0,
        }
    }
}

pub const MAX_CRITICS: usize = 8;

impl SacVarConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        let fail = |m: String| Err(SacError::Config(m));
        if !(0.0..=1.0).contains(&self.weight_critic_var) {
            return fail(format!("weight_critic_var must lie in [0, 1], got {}", self.weight_critic_var));
        }
        // gamma = 0 is allowed so myopic sabotage runs are expressible.
        if !(0.0..1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(2..=MAX_CRITICS).contains(&self.n_critics) {
            return fail(format!("n_critics must lie in [2, {MAX_CRITICS}], got {}", self.n_critics));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.train_freq == 0 || self.eval_episodes == 0 {
            return fail("batch_size, train_freq and eval_episodes must be at least 1".into());
        }
        if self.hidden_sizes.contains(&0) {
            return fail(format!("hidden sizes must be positive, got {:?}", self.hidden_sizes));
        }
        if !(0.0..=1.0).contains(&self.her_ratio) {
            return fail(format!("her_ratio must lie in [0, 1], got {}", self.her_ratio));
        }
        match self.entropy {
            Entropy::Fixed { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => {
                fail(format!("fixed alpha must be non-negative, got {alpha}"))
            }
            Entropy::Auto { initial_alpha, .. } if !(initial_alpha > 0.0 && initial_alpha.is_finite()) => {
                fail(format!("initial alpha must be positive, got {initial_alpha}"))
            }
            _ => Ok(()),
        }
    }
}

/// Keys accepted under `algorithm` in a resolved configuration.
pub const ALGORITHM_KEYS: [&str; 21] = [
    "name",
    "weight_critic_var",
    "intrinsic_reward",
    "n_critics",
    "gamma",
    "tau",
    "learning_rate",
    "batch_size",
    "hidden_sizes",
    "ent_coef",
    "ent_coef_init",
    "target_entropy",
    "buffer_size",
    "use_her",
    "her_ratio",
    "learning_starts",
    "train_freq",
    "gradient_steps",
    "total_steps",
    "eval_interval",
    "eval_episodes",
];

impl SacVarConfig {
    /// Builds a config from a resolved tree (`algorithm.*` plus top-level `seed`).
    /// Missing keys keep their defaults; unknown keys are rejected.
    pub fn from_tree(tree: &ConfigTree) -> Result<Self, ConfigError> {
        let mut cfg = SacVarConfig::default();
        if let Some(seed) = tree.get("seed") {
            cfg.seed = uint(seed, "seed")? as u64;
        }
        let Some(alg) = tree.get("algorithm") else {
            return Ok(cfg);
        };
        let alg = alg.as_map().ok_or(ConfigError::NotAMap {
            path: "algorithm".into(),
            found: alg.type_name(),
        })?;
        let (mut auto, mut init_alpha, mut fixed_alpha, mut target) = (true, 0.1, None, None);
        for (key, v) in alg {
            let k = format!("algorithm.{key}");
            match key.as_str() {
                "name" => {}
                "weight_critic_var" => cfg.weight_critic_var = float(v, &k)?,
                "intrinsic_reward" => cfg.intrinsic_reward = boolean(v, &k)?,
                "n_critics" => cfg.n_critics = uint(v, &k)?,
                "gamma" => cfg.gamma = float(v, &k)?,
                "tau" => cfg.tau = float(v, &k)?,
                "learning_rate" => cfg.learning_rate = float(v, &k)?,
                "batch_size" => cfg.batch_size = uint(v, &k)?,
                "hidden_sizes" => {
                    let Value::List(items) = v else {
                        return Err(invalid(&k, "expected a list of layer widths"));
                    };
                    cfg.hidden_sizes = items.iter().map(|i| uint(i, &k)).collect::<Result<_, _>>()?;
                }
                "ent_coef" => match v {
                    Value::Str(s) if s == "auto" => auto = true,
                    _ => {
                        auto = false;
                        fixed_alpha = Some(float(v, &k)?);
                    }
                },
                "ent_coef_init" => init_alpha = float(v, &k)?,
                "target_entropy" => match v {
                    Value::Str(s) if s == "auto" => target = None,
                    _ => target = Some(float(v, &k)?),
                },
                "buffer_size" => cfg.buffer_size = uint(v, &k)?,
                "use_her" => cfg.use_her = boolean(v, &k)?,
                "her_ratio" => cfg.her_ratio = float(v, &k)?,
                "learning_starts" => cfg.learning_starts = uint(v, &k)?,
                "train_freq" => cfg.train_freq = uint(v, &k)?,
                "gradient_steps" => cfg.gradient_steps = uint(v, &k)?,
                "total_steps" => cfg.total_steps = uint(v, &k)?,
                "eval_interval" => cfg.eval_interval = uint(v, &k)?,
                "eval_episodes" => cfg.eval_episodes = uint(v, &k)?,
                _ => {
                    return Err(ConfigError::UnknownKey {
                        key: k,
                        hint: format!("valid keys: {}", ALGORITHM_KEYS.join(", ")),
                    })
                }
            }
        }
        cfg.entropy = match (auto, fixed_alpha) {
            (false, Some(alpha)) => Entropy::Fixed { alpha },
            _ => Entropy::Auto {
                initial_alpha: init_alpha,
                target_entropy: target,
            },
        };
        cfg.validate().map_err(|e| invalid("algorithm", &e.to_string()))?;
        Ok(cfg)
    }
}

fn invalid(key: &str, msg: &str) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        msg: msg.into(),
    }
}

fn float(v: &Value, key: &str) -> Result<f64, ConfigError> {
    v.as_f64().ok_or_else(|| invalid(key, &format!("expected a number, got {} `{v}`", v.type_name())))
}

fn uint(v: &Value, key: &str) -> Result<usize, ConfigError> {
    match v.as_i64() {
        Some(i) if i >= 0 => Ok(i as usize),
        _ => Err(invalid(key, &format!("expected a non-negative integer, got {} `{v}`", v.type_name()))),
    }
}

fn boolean(v: &Value, key: &str) -> Result<bool, ConfigError> {
    v.as_bool().ok_or_else(|| invalid(key, &format!("expected true or false, got {} `{v}`", v.type_name())))
}
