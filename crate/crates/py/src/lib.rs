//! Python module `gcrl`: environments, the agent, config resolution and
//! tracked runs.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gcrl::cli::run::{execute_run, prepare, RunOptions};
use gcrl::env::{self as genv, GoalEnv, GoalObservation};
use gcrl::nn::Matrix;
use gcrl::sacvar::{self, SacError};
use gcrl::track::Tracker;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn sac_err(e: SacError) -> PyErr {
    match e {
        SacError::Config(_) | SacError::Shape(_) => value_err(e),
        other => runtime_err(other),
    }
}

fn obs_dict<'py>(py: Python<'py>, o: &GoalObservation) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("observation", o.observation.clone())?;
    d.set_item("achieved_goal", o.achieved_goal.clone())?;
    d.set_item("desired_goal", o.desired_goal.clone())?;
    Ok(d)
}

/// Per-row population variance of an N-column matrix given as rows.
#[pyfunction]
fn critic_variance(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let m = Matrix::from_rows(&rows).map_err(value_err)?;
    sacvar::critic_variance(&m).map_err(sac_err)
}

#[pyfunction]
fn minmax_scale(values: Vec<f64>) -> Vec<f64> {
    sacvar::minmax_scale(&values)
}

#[pyfunction]
fn mix_reward(extrinsic: Vec<f64>, intrinsic: Vec<f64>, eta: f64) -> PyResult<Vec<f64>> {
    sacvar::mix_reward(&extrinsic, &intrinsic, eta).map_err(sac_err)
}

/// Resolved configuration as YAML text.
#[pyfunction]
#[pyo3(signature = (overrides = Vec::new(), conf_dir = "conf".to_string()))]
fn resolve_config(overrides: Vec<String>, conf_dir: String) -> PyResult<String> {
    let tree = gcrl::config::resolve(&PathBuf::from(conf_dir), &overrides).map_err(value_err)?;
    Ok(gcrl::config::to_yaml(&tree))
}

/// Trains one tracked run; returns `{run_id, run_dir, final_success_rate, evaluations}`.
#[pyfunction]
#[pyo3(signature = (overrides = Vec::new(), conf_dir = "conf".to_string(), track_root = None, record_stream = true))]
fn run<'py>(
    py: Python<'py>,
    overrides: Vec<String>,
    conf_dir: String,
    track_root: Option<String>,
    record_stream: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let tracker = track_root.map(Tracker::new).unwrap_or_else(Tracker::from_env);
    let opts = RunOptions {
        record_stream,
        ..Default::default()
    };
    let conf = PathBuf::from(conf_dir);
    let s = py
        .detach(|| execute_run(&conf, &overrides, &tracker, opts))
        .map_err(runtime_err)?;
    let d = PyDict::new(py);
    d.set_item("run_id", s.run_id)?;
    d.set_item("run_dir", s.run_dir.display().to_string())?;
    d.set_item("final_success_rate", s.outcome.final_success_rate)?;
    d.set_item("evaluations", s.outcome.evaluations)?;
    Ok(d)
}

/// `[(timestamp_ms, value, step), ...]` for one metric of a run.
#[pyfunction]
fn read_history(root: String, run_id: String, metric: String) -> PyResult<Vec<(u64, f64, u64)>> {
    let points = gcrl::track::read_history(&PathBuf::from(root), &run_id, &metric).map_err(value_err)?;
    Ok(points.into_iter().map(|p| (p.timestamp, p.value, p.step)).collect())
}

#[pyclass(name = "Env")]
struct PyEnv {
    inner: Mutex<Box<dyn GoalEnv>>,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Mutex::new(genv::make(name).map_err(value_err)?),
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.lock().unwrap().spec().name.to_string()
    }

    #[getter]
    fn action_dim(&self) -> usize {
        self.inner.lock().unwrap().spec().action_dim
    }

    #[getter]
    fn max_episode_steps(&self) -> usize {
        self.inner.lock().unwrap().spec().max_episode_steps
    }

    #[pyo3(signature = (seed = None))]
    fn reset<'py>(&self, py: Python<'py>, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
        let o = self.inner.lock().unwrap().reset(seed);
        obs_dict(py, &o)
    }

    /// Returns `(obs, reward, done, is_success)`.
    fn step<'py>(&self, py: Python<'py>, action: Vec<f64>) -> PyResult<(Bound<'py, PyDict>, f64, bool, bool)> {
        let r = self.inner.lock().unwrap().step(&action).map_err(value_err)?;
        Ok((obs_dict(py, &r.obs)?, r.reward, r.done, r.is_success))
    }

    fn compute_reward(&self, achieved_goal: Vec<f64>, desired_goal: Vec<f64>) -> PyResult<f64> {
        self.inner
            .lock()
            .unwrap()
            .compute_reward(&achieved_goal, &desired_goal)
            .map_err(value_err)
    }
}

#[pyclass(name = "Agent")]
struct PyAgent {
    agent: Mutex<sacvar::Agent>,
    env: Mutex<Box<dyn GoalEnv>>,
}

#[pymethods]
impl PyAgent {
    /// Builds an agent and its environment from config overrides.
    #[new]
    #[pyo3(signature = (overrides = Vec::new(), conf_dir = "conf".to_string()))]
    fn new(overrides: Vec<String>, conf_dir: String) -> PyResult<Self> {
        let (_, agent, env) = prepare(&PathBuf::from(conf_dir), &overrides, 0).map_err(value_err)?;
        Ok(Self {
            agent: Mutex::new(agent),
            env: Mutex::new(env),
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.agent.lock().unwrap().alpha()
    }

    #[getter]
    fn updates(&self) -> u64 {
        self.agent.lock().unwrap().updates()
    }

    /// Mean action for `observation || desired_goal`.
    fn act(&self, policy_input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.agent.lock().unwrap().act_deterministic(&policy_input).map_err(sac_err)
    }

    fn sample_action(&self, policy_input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.agent.lock().unwrap().act(&policy_input).map_err(sac_err)
    }

    fn critic_variance_at(&self, policy_input: Vec<f64>, action: Vec<f64>) -> PyResult<f64> {
        self.agent
            .lock()
            .unwrap()
            .critic_variance_at(&policy_input, &action)
            .map_err(sac_err)
    }

    /// Trains for `total_steps` (config value when omitted); returns
    /// `{final_success_rate, evaluations, updates, metrics}`.
    #[pyo3(signature = (total_steps = None))]
    fn train<'py>(&self, py: Python<'py>, total_steps: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
        let (outcome, metrics) = py.detach(|| {
            let mut agent = self.agent.lock().unwrap();
            let mut env = self.env.lock().unwrap();
            let total = total_steps.unwrap_or(agent.config.total_steps);
            let mut sink: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
            sacvar::train(&mut agent, env.as_mut(), total, &mut sink, None).map(|o| (o, sink))
        })
        .map_err(sac_err)?;
        let d = PyDict::new(py);
        d.set_item("final_success_rate", outcome.final_success_rate)?;
        d.set_item("evaluations", outcome.evaluations)?;
        d.set_item("updates", outcome.updates)?;
        d.set_item("metrics", metrics)?;
        Ok(d)
    }

    #[pyo3(signature = (n_episodes = 10, seed = 0))]
    fn evaluate(&self, n_episodes: usize, seed: u64) -> PyResult<f64> {
        let agent = self.agent.lock().unwrap();
        let mut env = self.env.lock().unwrap();
        sacvar::evaluate(&agent, env.as_mut(), n_episodes, seed).map_err(sac_err)
    }

    fn save(&self, path: String) -> PyResult<()> {
        let mut bytes = Vec::new();
        self.agent.lock().unwrap().save(&mut bytes).map_err(runtime_err)?;
        std::fs::write(path, bytes).map_err(runtime_err)
    }

    fn load(&self, path: String) -> PyResult<()> {
        let bytes = std::fs::read(path).map_err(runtime_err)?;
        self.agent.lock().unwrap().load(&mut bytes.as_slice()).map_err(value_err)
    }
}

#[pymodule]
#[pyo3(name = "gcrl")]
pub fn gcrl_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(critic_variance, m)?)?;
    m.add_function(wrap_pyfunction!(minmax_scale, m)?)?;
    m.add_function(wrap_pyfunction!(mix_reward, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(read_history, m)?)?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyAgent>()?;
    m.add("ENV_NAMES", genv::ENV_NAMES.to_vec())?;
    Ok(())
}
