//! File-based experiment tracking in the MLflow FileStore layout:
//!
//! ```text
//! <root>/<experiment_id>/meta.yaml
//! <root>/<experiment_id>/<run_id>/meta.yaml
//! <root>/<experiment_id>/<run_id>/params/<flattened.key>      stringified value
//! <root>/<experiment_id>/<run_id>/metrics/<name>              "<timestamp_ms> <value> <step>\n" per point
//! <root>/<experiment_id>/<run_id>/tags/<name>
//! <root>/<experiment_id>/<run_id>/artifacts/
//! ```
//!
//! Metric files are append-only and every point is written with a single
//! `write` of a whole line, so concurrent readers never observe a torn line
//! (they may see a trailing partial one, which [`read_history`] skips).

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{ConfigTree, Value};

pub const TRACK_ROOT_ENV: &str = "GCRL_TRACK_ROOT";
pub const DEFAULT_TRACK_ROOT: &str = "mlruns";
pub const CONFIG_ARTIFACT: &str = "config.yaml";

#[derive(Debug, thiserror::Error)]
pub enum TrackError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("run {0} not found")]
    RunNotFound(String),
    #[error("run {0} has already ended")]
    Ended(String),
    #[error("malformed {path}: {msg}")]
    Malformed { path: PathBuf, msg: String },
}

fn io<P: AsRef<Path>>(path: P) -> impl FnOnce(std::io::Error) -> TrackError {
    let path = path.as_ref().to_path_buf();
    move |source| TrackError::Io { path, source }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Running,
    Finished,
    Failed,
    Killed,
}

impl RunStatus {
    /// Numeric code used in `meta.yaml`.
    pub fn code(self) -> i64 {
        match self {
            RunStatus::Running => 1,
            RunStatus::Finished => 3,
            RunStatus::Failed => 4,
            RunStatus::Killed => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    pub name: String,
    pub value: f64,
    pub step: u64,
    pub timestamp: u64,
}

/// Formats one metric line exactly as stored.
pub fn format_metric_line(p: &MetricPoint) -> String {
    let value = if p.value.is_nan() {
        "nan".to_string()
    } else if p.value.is_infinite() {
        if p.value > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{}", p.value)
    };
    format!("{} {} {}\n", p.timestamp, value, p.step)
}

/// Root directory that holds experiments.
#[derive(Debug, Clone)]
pub struct Tracker {
    root: PathBuf,
}

impl Tracker {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$GCRL_TRACK_ROOT`, else `./mlruns`.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os(TRACK_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| DEFAULT_TRACK_ROOT.into()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn experiment_dirs(&self) -> Result<Vec<(u64, PathBuf)>, TrackError> {
        if !self.root.exists() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io(&self.root))? {
            let entry = entry.map_err(io(&self.root))?;
            if let Some(id) = entry.file_name().to_str().and_then(|n| n.parse::<u64>().ok()) {
                if entry.path().is_dir() {
                    out.push((id, entry.path()));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// Id of the experiment called `name`, creating it if needed.
    pub fn experiment_id(&self, name: &str) -> Result<String, TrackError> {
        fs::create_dir_all(&self.root).map_err(io(&self.root))?;
        loop {
            let dirs = self.experiment_dirs()?;
            for (id, dir) in &dirs {
                if let Ok(meta) = read_meta(&dir.join("meta.yaml")) {
                    if meta.get("name").map(String::as_str) == Some(name) {
                        return Ok(id.to_string());
                    }
                }
            }
            let id = dirs.last().map(|(i, _)| i + 1).unwrap_or(0);
            let dir = self.root.join(id.to_string());
            // create_dir is atomic: a concurrent creator makes us rescan
            match fs::create_dir(&dir) {
                Ok(()) => {
                    let artifact = absolute(&dir);
                    let meta = format!(
                        "artifact_location: {}\ncreation_time: {}\nexperiment_id: '{id}'\nlast_update_time: {}\nlifecycle_stage: active\nname: {name}\n",
                        file_uri(&artifact),
                        now_ms(),
                        now_ms(),
                    );
                    write_atomic(&dir.join("meta.yaml"), meta.as_bytes())?;
                    return Ok(id.to_string());
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(io(&dir)(e)),
            }
        }
    }

    /// Creates a run directory, records every resolved config key under
    /// `params/` and the full config as an artifact.
    pub fn start_run(&self, experiment_name: &str, resolved_config: &ConfigTree) -> Result<Run, TrackError> {
        let experiment_id = self.experiment_id(experiment_name)?;
        let exp_dir = self.root.join(&experiment_id);
        let (run_id, dir) = loop {
            let id = uuid::Uuid::new_v4().simple().to_string();
            let dir = exp_dir.join(&id);
            match fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(io(&dir)(e)),
            }
        };
        for sub in ["metrics", "params", "tags", "artifacts"] {
            fs::create_dir_all(dir.join(sub)).map_err(io(dir.join(sub)))?;
        }
        for (key, value) in resolved_config.flatten() {
            write_atomic(&dir.join("params").join(&key), value.as_bytes())?;
        }
        write_atomic(
            &dir.join("artifacts").join(CONFIG_ARTIFACT),
            crate::config::to_yaml(resolved_config).as_bytes(),
        )?;
        let name = match resolved_config.get("algorithm.name") {
            Some(Value::Str(a)) => format!("{a}-{}", &run_id[..8]),
            _ => run_id[..8].to_string(),
        };
        let mut run = Run {
            experiment_id,
            run_id,
            name,
            dir,
            start_time: now_ms(),
            end_time: None,
            status: RunStatus::Running,
            metric_files: HashMap::new(),
        };
        run.write_meta()?;
        run.set_tag("mlflow.runName", &run.name.clone())?;
        Ok(run)
    }

    /// Directory of `run_id`, searching all experiments.
    pub fn find_run(&self, run_id: &str) -> Result<PathBuf, TrackError> {
        for (_, dir) in self.experiment_dirs()? {
            let candidate = dir.join(run_id);
            if candidate.join("meta.yaml").exists() {
                return Ok(candidate);
            }
        }
        Err(TrackError::RunNotFound(run_id.into()))
    }

    /// All run directories of all experiments.
    pub fn runs(&self) -> Result<Vec<PathBuf>, TrackError> {
        let mut out = Vec::new();
        for (_, dir) in self.experiment_dirs()? {
            for entry in fs::read_dir(&dir).map_err(io(&dir))? {
                let p = entry.map_err(io(&dir))?.path();
                if p.is_dir() && p.join("meta.yaml").exists() {
                    out.push(p);
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

/// An active (or ended) tracked run. One writer per run.
#[derive(Debug)]
pub struct Run {
    pub experiment_id: String,
    pub run_id: String,
    pub name: String,
    dir: PathBuf,
    pub start_time: u64,
    pub end_time: Option<u64>,
    pub status: RunStatus,
    metric_files: HashMap<String, File>,
}

impl Run {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.dir.join("artifacts")
    }

    fn ensure_active(&self) -> Result<(), TrackError> {
        if self.status != RunStatus::Running {
            return Err(TrackError::Ended(self.run_id.clone()));
        }
        Ok(())
    }

    pub fn log_metric(&mut self, point: &MetricPoint) -> Result<(), TrackError> {
        self.ensure_active()?;
        if point.name.is_empty() || point.name.contains(['/', '\\']) || point.name.starts_with('.') {
            return Err(TrackError::Malformed {
                path: self.dir.join("metrics"),
                msg: format!("invalid metric name `{}`", point.name),
            });
        }
        let path = self.dir.join("metrics").join(&point.name);
        let file = match self.metric_files.get_mut(&point.name) {
            Some(f) => f,
            None => {
                let f = OpenOptions::new().create(true).append(true).open(&path).map_err(io(&path))?;
                self.metric_files.entry(point.name.clone()).or_insert(f)
            }
        };
        file.write_all(format_metric_line(point).as_bytes()).map_err(io(&path))
    }

    /// Logs at the current wall-clock time.
    pub fn log(&mut self, name: &str, value: f64, step: u64) -> Result<(), TrackError> {
        self.log_metric(&MetricPoint {
            name: name.into(),
            value,
            step,
            timestamp: now_ms(),
        })
    }

    pub fn set_tag(&mut self, key: &str, value: &str) -> Result<(), TrackError> {
        write_atomic(&self.dir.join("tags").join(key), value.as_bytes())
    }

    pub fn log_artifact(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, TrackError> {
        let path = self.artifacts_dir().join(name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    pub fn flush(&mut self) -> Result<(), TrackError> {
        for (name, f) in &mut self.metric_files {
            f.flush().map_err(io(self.dir.join("metrics").join(name)))?;
        }
        Ok(())
    }

    /// Marks the run ended with `status` and rewrites `meta.yaml`.
    pub fn end(&mut self, status: RunStatus) -> Result<(), TrackError> {
        self.ensure_active()?;
        self.flush()?;
        self.metric_files.clear();
        self.status = status;
        self.end_time = Some(now_ms());
        self.write_meta()
    }

    fn write_meta(&self) -> Result<(), TrackError> {
        let artifact = absolute(&self.artifacts_dir());
        let end = self.end_time.map(|t| t.to_string()).unwrap_or_else(|| "null".into());
        let meta = format!(
            "artifact_uri: {}\nend_time: {end}\nentry_point_name: ''\nexperiment_id: '{}'\nlifecycle_stage: active\nrun_id: {}\nrun_name: {}\nrun_uuid: {}\nsource_name: ''\nsource_type: 4\nsource_version: ''\nstart_time: {}\nstatus: {}\ntags: []\nuser_id: gcrl\n",
            file_uri(&artifact),
            self.experiment_id,
            self.run_id,
            self.name,
            self.run_id,
            self.start_time,
            self.status.code(),
        );
        write_atomic(&self.dir.join("meta.yaml"), meta.as_bytes())
    }
}

impl Drop for Run {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

fn file_uri(p: &Path) -> String {
    format!("file://{}", p.display())
}

/// Writes via a temp file and rename so readers see old or new, never half.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TrackError> {
    let tmp = path.with_extension(format!(
        "{}tmp",
        path.extension().and_then(|e| e.to_str()).map(|e| format!("{e}.")).unwrap_or_default()
    ));
    fs::write(&tmp, bytes).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

/// Flat `key: value` reader for meta files; surrounding quotes are dropped.
pub fn read_meta(path: &Path) -> Result<HashMap<String, String>, TrackError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let mut out = HashMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once(':') {
            let v = v.trim();
            let v = v
                .strip_prefix('\'')
                .and_then(|s| s.strip_suffix('\''))
                .unwrap_or(v);
            out.insert(k.trim().to_string(), v.to_string());
        }
    }
    Ok(out)
}

/// Parses metric file text; a final line without a newline is ignored.
pub fn parse_metric_lines(name: &str, text: &str) -> Result<Vec<MetricPoint>, String> {
    let complete = match text.rfind('\n') {
        Some(i) => &text[..i],
        None => return Ok(Vec::new()),
    };
    complete
        .lines()
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, l)| {
            let parts: Vec<&str> = l.split(' ').collect();
            if parts.len() != 3 {
                return Err(format!("line {}: expected 3 fields, got `{l}`", i + 1));
            }
            let bad = |f: &str| format!("line {}: bad {f} in `{l}`", i + 1);
            Ok(MetricPoint {
                name: name.to_string(),
                timestamp: parts[0].parse().map_err(|_| bad("timestamp"))?,
                value: parts[1].parse().map_err(|_| bad("value"))?,
                step: parts[2].parse().map_err(|_| bad("step"))?,
            })
        })
        .collect()
}

/// Every point logged for `metric_name` in run `run_id`, in append order.
pub fn read_history(root: &Path, run_id: &str, metric_name: &str) -> Result<Vec<MetricPoint>, TrackError> {
    let dir = Tracker::new(root).find_run(run_id)?;
    read_history_in(&dir, metric_name)
}

/// Like [`read_history`] for a known run directory. A metric never logged is empty.
pub fn read_history_in(run_dir: &Path, metric_name: &str) -> Result<Vec<MetricPoint>, TrackError> {
    let path = run_dir.join("metrics").join(metric_name);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(&path)(e)),
    };
    parse_metric_lines(metric_name, &text).map_err(|msg| TrackError::Malformed { path, msg })
}
