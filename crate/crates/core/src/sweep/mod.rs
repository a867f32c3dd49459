//! Categorical hyperparameter studies.
//!
//! Scheduling is repeat-and-prune:
//!
//! * phase 1 gives every configuration of the categorical product
//!   `min_trials_per_param` trials, round-robin in declaration order;
//! * phase 2 (entered once every phase-1 trial has finished) repeatedly gives
//!   the next trial to the configuration with the best mean objective that is
//!   still under `max_trials_per_param`, ties going to the lowest index.
//!
//! Every planned trial counts against `max_trials` whatever its outcome;
//! only completed trials enter the means.

mod journal;
mod runner;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigTree, Value};

pub use journal::{Journal, JournalEvent};
pub use runner::{render_report, run_study, ConfigSummary, StudyReport, TrialOutcome, TrialRequest};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("study configuration: {0}")]
    Config(String),
    #[error("unknown trial {0}")]
    UnknownTrial(u64),
    #[error("trial {0} is not running")]
    NotRunning(u64),
    #[error("journal {path}: {msg}")]
    Journal { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            Direction::Maximize => a > b,
            Direction::Minimize => a < b,
        }
    }
}

/// One searched key. `path` is kept verbatim, so a `++` prefix makes the
/// assignment an additive override.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchEntry {
    pub path: String,
    pub choices: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchSpace {
    pub entries: Vec<SearchEntry>,
}

/// One point of the categorical product: `(path, value)` per entry.
pub type Assignment = Vec<(String, Value)>;

/// Override token for one assigned key.
pub fn override_token(path: &str, value: &Value) -> String {
    format!("{path}={value}")
}

impl SearchSpace {
    pub fn from_tree(tree: &ConfigTree) -> Result<Self, SweepError> {
        let mut entries = Vec::new();
        for (path, spec) in tree.as_map() {
            let bad = |m: &str| SweepError::Config(format!("search_space.{path}: {m}"));
            let spec = spec.as_map().ok_or_else(|| bad("expected a map with `type` and `choices`"))?;
            match spec.get("type").and_then(Value::as_str) {
                Some("categorical") => {}
                Some(other) => return Err(bad(&format!("unsupported type `{other}` (only categorical)"))),
                None => return Err(bad("missing `type`")),
            }
            let choices = match spec.get("choices") {
                Some(Value::List(c)) if !c.is_empty() => c.clone(),
                Some(Value::List(_)) => return Err(bad("choices must not be empty")),
                _ => return Err(bad("`choices` must be a list")),
            };
            if let Some(extra) = spec.keys().find(|k| *k != "type" && *k != "choices") {
                return Err(bad(&format!("unknown key `{extra}`")));
            }
            entries.push(SearchEntry {
                path: path.clone(),
                choices,
            });
        }
        if entries.is_empty() {
            return Err(SweepError::Config("search space is empty".into()));
        }
        Ok(Self { entries })
    }

    /// The categorical product; the first entry varies slowest.
    pub fn configurations(&self) -> Vec<Assignment> {
        let mut out: Vec<Assignment> = vec![Vec::new()];
        for e in &self.entries {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    e.choices.iter().map(move |c| {
                        let mut a = prefix.clone();
                        a.push((e.path.clone(), c.clone()));
                        a
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub study_name: String,
    pub max_trials: usize,
    pub n_jobs: usize,
    pub direction: Direction,
    pub min_trials_per_param: usize,
    pub max_trials_per_param: usize,
    pub objective_metric: String,
    pub search_space: SearchSpace,
    /// Overrides applied to every trial before its assignment
    /// (top-level `algorithm`/`env` selectors and the `overrides` list).
    pub base_overrides: Vec<String>,
}

const STUDY_KEYS: [&str; 8] = [
    "study_name",
    "max_trials",
    "n_jobs",
    "direction",
    "min_trials_per_param",
    "max_trials_per_param",
    "objective_metric",
    "search_space",
];

impl StudyConfig {
    /// Reads a study file: sweeper keys live under `hydra.sweeper` (or at the
    /// top level); top-level `algorithm`, `env` and `overrides` set up the
    /// base run.
    pub fn from_tree(tree: &ConfigTree) -> Result<Self, SweepError> {
        let bad = |m: String| SweepError::Config(m);
        let sweeper = match tree.subtree("hydra.sweeper") {
            Some(s) => s,
            None => tree.clone(),
        };
        let nested = tree.contains("hydra.sweeper");
        let mut base_overrides = Vec::new();
        for (key, value) in tree.as_map() {
            match key.as_str() {
                "hydra" => {}
                "algorithm" | "env" | "seed" | "experiment" => base_overrides.push(format!("{key}={value}")),
                "overrides" => match value {
                    Value::List(items) => {
                        for i in items {
                            match i {
                                Value::Str(s) => base_overrides.push(s.clone()),
                                other => base_overrides.push(other.to_string()),
                            }
                        }
                    }
                    _ => return Err(bad("`overrides` must be a list of key=value tokens".into())),
                },
                k if STUDY_KEYS.contains(&k) && !nested => {}
                other => return Err(bad(format!("unknown study key `{other}`"))),
            }
        }
        let run_key = |k: &str| matches!(k, "algorithm" | "env" | "seed" | "experiment" | "overrides");
        if let Some(extra) = sweeper
            .as_map()
            .keys()
            .find(|k| !STUDY_KEYS.contains(&k.as_str()) && (nested || !run_key(k)))
        {
            return Err(bad(format!("unknown sweeper key `{extra}`")));
        }
        let uint = |k: &str, default: Option<usize>| -> Result<usize, SweepError> {
            match sweeper.get(k) {
                Some(v) => match v.as_i64() {
                    Some(i) if i >= 0 => Ok(i as usize),
                    _ => Err(SweepError::Config(format!("`{k}` must be a non-negative integer, got `{v}`"))),
                },
                None => default.ok_or_else(|| SweepError::Config(format!("missing `{k}`"))),
            }
        };
        let direction = match sweeper.get("direction").map(|v| v.to_string()).as_deref() {
            None | Some("maximize") => Direction::Maximize,
            Some("minimize") => Direction::Minimize,
            Some(other) => return Err(bad(format!("direction must be maximize or minimize, got `{other}`"))),
        };
        let space_tree = sweeper
            .subtree("search_space")
            .ok_or_else(|| bad("missing `search_space`".into()))?;
        let min = uint("min_trials_per_param", Some(1))?;
        let cfg = StudyConfig {
            study_name: sweeper
                .get("study_name")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("missing `study_name`".into()))?
                .to_string(),
            max_trials: uint("max_trials", None)?,
            n_jobs: uint("n_jobs", Some(1))?,
            direction,
            min_trials_per_param: min,
            max_trials_per_param: uint("max_trials_per_param", Some(min))?,
            objective_metric: sweeper
                .get("objective_metric")
                .map(|v| v.to_string())
                .unwrap_or_else(|| "success_rate".into()),
            search_space: SearchSpace::from_tree(&space_tree)?,
            base_overrides,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        let fail = |m: String| Err(SweepError::Config(m));
        if self.study_name.is_empty() || self.study_name.contains(['/', '\\']) || self.study_name.starts_with('.') {
            return fail(format!("invalid study_name `{}`", self.study_name));
        }
        if self.min_trials_per_param < 1 || self.min_trials_per_param > self.max_trials_per_param {
            return fail(format!(
                "need 1 <= min_trials_per_param ({}) <= max_trials_per_param ({})",
                self.min_trials_per_param, self.max_trials_per_param
            ));
        }
        if self.n_jobs < 1 {
            return fail("n_jobs must be at least 1".into());
        }
        if self.max_trials < self.min_trials_per_param {
            return fail(format!(
                "max_trials ({}) must be at least min_trials_per_param ({})",
                self.max_trials, self.min_trials_per_param
            ));
        }
        if self.search_space.entries.is_empty() {
            return fail("search space is empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Running,
    Complete,
    Failed,
    Pruned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub trial_id: u64,
    pub config_index: usize,
    pub params: Assignment,
    pub status: TrialStatus,
    /// Present exactly when `status` is `Complete`.
    pub objective: Option<f64>,
    pub run_id: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Trial(Trial),
    /// Nothing can be planned until a running trial finishes.
    Wait,
    Done,
}

/// Study bookkeeping; no I/O.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyState {
    pub config: StudyConfig,
    pub configurations: Vec<Assignment>,
    pub trials: Vec<Trial>,
}

impl StudyState {
    pub fn new(config: StudyConfig) -> Result<Self, SweepError> {
        config.validate()?;
        let configurations = config.search_space.configurations();
        Ok(Self {
            config,
            configurations,
            trials: Vec::new(),
        })
    }

    /// Trials of every status per configuration.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.configurations.len()];
        for t in &self.trials {
            c[t.config_index] += 1;
        }
        c
    }

    /// Mean objective of completed trials per configuration, summed in trial order.
    pub fn means(&self) -> Vec<Option<f64>> {
        let mut sum = vec![0.0; self.configurations.len()];
        let mut n = vec![0usize; self.configurations.len()];
        for t in &self.trials {
            if let (TrialStatus::Complete, Some(o)) = (t.status, t.objective) {
                sum[t.config_index] += o;
                n[t.config_index] += 1;
            }
        }
        sum.iter().zip(&n).map(|(s, &k)| (k > 0).then(|| s / k as f64)).collect()
    }

    pub fn running(&self) -> usize {
        self.trials.iter().filter(|t| t.status == TrialStatus::Running).count()
    }

    /// Best configuration by mean objective, lowest index on ties.
    pub fn best(&self) -> Option<usize> {
        best_index(&self.means(), self.config.direction, |_| true)
    }

    pub fn plan_next_trial(&mut self) -> Plan {
        if self.trials.len() >= self.config.max_trials {
            return if self.running() > 0 { Plan::Wait } else { Plan::Done };
        }
        let counts = self.counts();
        let min = self.config.min_trials_per_param;
        // phase 1: least-covered configuration first, lowest index on ties
        let (idx, &lowest) = counts
            .iter()
            .enumerate()
            .min_by_key(|&(i, c)| (*c, i))
            .expect("non-empty product");
        if lowest < min {
            return Plan::Trial(self.open_trial(idx));
        }
        let phase1_pending = self
            .trials
            .iter()
            .any(|t| t.status == TrialStatus::Running && self.ordinal(t) < min);
        if phase1_pending {
            return Plan::Wait;
        }
        let cap = self.config.max_trials_per_param;
        match best_index(&self.means(), self.config.direction, |i| counts[i] < cap) {
            Some(i) => Plan::Trial(self.open_trial(i)),
            None if self.running() > 0 => Plan::Wait,
            None => Plan::Done,
        }
    }

    /// 0-based position of `t` among the trials of its configuration.
    fn ordinal(&self, t: &Trial) -> usize {
        self.trials
            .iter()
            .filter(|o| o.config_index == t.config_index && o.trial_id < t.trial_id)
            .count()
    }

    fn open_trial(&mut self, config_index: usize) -> Trial {
        let trial = Trial {
            trial_id: self.trials.len() as u64,
            config_index,
            params: self.configurations[config_index].clone(),
            status: TrialStatus::Running,
            objective: None,
            run_id: None,
            error: None,
        };
        self.trials.push(trial.clone());
        trial
    }

    fn trial_mut(&mut self, trial_id: u64) -> Result<&mut Trial, SweepError> {
        let t = self
            .trials
            .get_mut(trial_id as usize)
            .ok_or(SweepError::UnknownTrial(trial_id))?;
        if t.status != TrialStatus::Running {
            return Err(SweepError::NotRunning(trial_id));
        }
        Ok(t)
    }

    pub fn record_result(&mut self, trial_id: u64, outcome: &TrialOutcome) -> Result<(), SweepError> {
        let t = self.trial_mut(trial_id)?;
        match outcome {
            TrialOutcome::Complete { objective, run_id } if objective.is_finite() => {
                t.status = TrialStatus::Complete;
                t.objective = Some(*objective);
                t.run_id = run_id.clone();
            }
            TrialOutcome::Complete { objective, run_id } => {
                t.status = TrialStatus::Failed;
                t.run_id = run_id.clone();
                t.error = Some(format!("non-finite objective {objective}"));
            }
            TrialOutcome::Failed { error, run_id } => {
                t.status = TrialStatus::Failed;
                t.run_id = run_id.clone();
                t.error = Some(error.clone());
            }
            TrialOutcome::Pruned { reason, run_id } => {
                t.status = TrialStatus::Pruned;
                t.run_id = run_id.clone();
                t.error = Some(reason.clone());
            }
        }
        Ok(())
    }

    /// Per-configuration statistics keyed by configuration index.
    pub fn summaries(&self) -> Vec<ConfigSummary> {
        let means = self.means();
        let mut by_cfg: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
        for t in &self.trials {
            let e = by_cfg.entry(t.config_index).or_default();
            match t.status {
                TrialStatus::Complete => e.0 += 1,
                TrialStatus::Failed => e.1 += 1,
                _ => e.2 += 1,
            }
        }
        (0..self.configurations.len())
            .map(|i| {
                let (complete, failed, other) = by_cfg.get(&i).copied().unwrap_or_default();
                ConfigSummary {
                    index: i,
                    params: self.configurations[i]
                        .iter()
                        .map(|(k, v)| (k.clone(), v.to_string()))
                        .collect(),
                    mean: means[i],
                    complete,
                    failed,
                    trials: complete + failed + other,
                }
            })
            .collect()
    }
}

/// First index (in order) with the best `Some` value among `eligible` ones.
pub fn best_index(values: &[Option<f64>], direction: Direction, eligible: impl Fn(usize) -> bool) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let (Some(v), true) = (v, eligible(i)) {
            if best.is_none_or(|(_, b)| direction.better(*v, b)) {
                best = Some((i, *v));
            }
        }
    }
    best.map(|(i, _)| i)
}
