//! One tracked training run, shared by `run` and the sweep launcher.

use std::path::{Path, PathBuf};

use super::CliError;
use crate::config::{self, ConfigTree, Value};
use crate::env;
use crate::livemetrics::{channel, spawn_recorder, DropPolicy, STREAM_FILE};
use crate::sacvar::{train, Agent, SacError, SacVarConfig, TrainOutcome};
use crate::sweep::{TrialOutcome, TrialRequest};
use crate::track::{read_history_in, RunStatus, Tracker};

pub const CHECKPOINT_FILE: &str = "agent.ckpt";

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Record a live stream into the run's artifacts.
    pub record_stream: bool,
    /// Added to the resolved seed (distinct seeds for repeated sweep trials).
    pub seed_offset: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_stream: true,
            seed_offset: 0,
        }
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub config: ConfigTree,
    pub outcome: TrainOutcome,
}

/// Resolved config, agent and environment for `overrides`.
pub fn prepare(
    conf_dir: &Path,
    overrides: &[String],
    seed_offset: u64,
) -> Result<(ConfigTree, Agent, Box<dyn env::GoalEnv>), CliError> {
    let mut tree = config::resolve(conf_dir, overrides)?;
    if seed_offset > 0 {
        let seed = tree.get("seed").and_then(Value::as_i64).unwrap_or(0) as u64;
        tree.set("seed", Value::Int((seed + seed_offset) as i64))?;
    }
    let cfg = SacVarConfig::from_tree(&tree)?;
    let env_name = tree.get("env").map(|v| v.to_string()).unwrap_or_default();
    let env = env::make(&env_name).map_err(|e| CliError::Config(e.to_string()))?;
    let spec = env.spec().clone();
    let agent = Agent::new(cfg, spec.obs_dim + spec.goal_dim, spec.action_dim)?;
    Ok((tree, agent, env))
}

/// Resolves, trains and records one run under `tracker`.
pub fn execute_run(conf_dir: &Path, overrides: &[String], tracker: &Tracker, opts: RunOptions) -> Result<RunSummary, CliError> {
    let (tree, mut agent, mut env) = prepare(conf_dir, overrides, opts.seed_offset)?;
    let experiment = tree
        .get("experiment")
        .map(|v| v.to_string())
        .unwrap_or_else(|| config::DEFAULT_EXPERIMENT.into());
    let mut run = tracker.start_run(&experiment, &tree)?;
    let total = agent.config.total_steps;

    let result = if opts.record_stream {
        let (mut tx, rx) = channel(4096, DropPolicy::Block);
        let recorder = spawn_recorder(rx, run.artifacts_dir().join(STREAM_FILE));
        let r = train(&mut agent, env.as_mut(), total, &mut run, Some(&mut tx));
        drop(tx);
        let recorded = recorder.join().map_err(|_| CliError::Other("stream recorder panicked".into()))?;
        match (r, recorded) {
            (Err(e), _) => Err(e),
            (Ok(_), Err(e)) => Err(SacError::Sink(e.to_string())),
            (Ok(o), Ok(_)) => Ok(o),
        }
    } else {
        train(&mut agent, env.as_mut(), total, &mut run, None)
    };

    match result {
        Ok(outcome) => {
            let mut bytes = Vec::new();
            agent.save(&mut bytes).map_err(|e| CliError::Other(e.to_string()))?;
            run.log_artifact(CHECKPOINT_FILE, &bytes)?;
            run.end(RunStatus::Finished)?;
            Ok(RunSummary {
                run_id: run.run_id.clone(),
                run_dir: run.dir().to_path_buf(),
                config: tree,
                outcome,
            })
        }
        Err(e) => {
            let _ = run.set_tag("error", &e.to_string());
            let _ = run.end(RunStatus::Failed);
            Err(e.into())
        }
    }
}

/// Sweep trial launcher: a full tracked run whose objective is the last
/// logged value of the study's objective metric. Trial `k` runs with seed
/// offset `k` so repeated configurations see different seeds.
pub fn sweep_launcher<'a>(conf_dir: &'a Path, tracker: &'a Tracker) -> impl Fn(&TrialRequest) -> TrialOutcome + Sync + 'a {
    move |req: &TrialRequest| {
        let mut overrides = req.overrides.clone();
        if !overrides.iter().any(|o| o.starts_with("experiment=")) {
            overrides.insert(0, format!("experiment={}", req.study_name));
        }
        let opts = RunOptions {
            record_stream: false,
            seed_offset: req.trial_id,
        };
        match execute_run(conf_dir, &overrides, tracker, opts) {
            Ok(summary) => {
                let run_id = Some(summary.run_id.clone());
                match read_history_in(&summary.run_dir, &req.objective_metric) {
                    Ok(h) if !h.is_empty() => TrialOutcome::Complete {
                        objective: h.last().unwrap().value,
                        run_id,
                    },
                    Ok(_) => TrialOutcome::Failed {
                        error: format!("metric `{}` was never logged", req.objective_metric),
                        run_id,
                    },
                    Err(e) => TrialOutcome::Failed {
                        error: e.to_string(),
                        run_id,
                    },
                }
            }
            Err(e) => TrialOutcome::Failed {
                error: e.to_string(),
                run_id: None,
            },
        }
    }
}
