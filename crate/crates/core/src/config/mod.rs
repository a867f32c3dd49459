//! Layered configuration.
//!
//! A resolved run configuration is built from:
//!
//! 1. built-in top-level keys (`algorithm`, `env`, `seed`, `experiment`),
//! 2. `conf/algorithm/<name>.yaml` placed under the `algorithm` key,
//! 3. the optional overlay `conf/algorithm/<name>@<env>.yaml`, deep-merged on top,
//! 4. command-line directives `key=value` (replace) and `++key=value` (add),
//!    applied left to right.
//!
//! `algorithm=<name>` and `env=<name>` select components before any file is read.

mod overrides;
mod value;
pub mod yaml;

use std::path::{Path, PathBuf};

pub use overrides::{apply_overrides, OverrideDirective, OverrideMode};
pub use value::{ConfigTree, Value};

use crate::env::ENV_NAMES;

pub const DEFAULT_ALGORITHM: &str = "sac_var";
pub const DEFAULT_ENV: &str = "PointReach-v0";
pub const DEFAULT_EXPERIMENT: &str = "Default";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: line {line}: {msg}")]
    ParseFile { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Syntax(String),
    #[error("unknown key `{key}` ({hint})")]
    UnknownKey { key: String, hint: String },
    #[error("key `{0}` already exists; drop the ++ prefix to replace it")]
    DuplicateAdd(String),
    #[error("`{path}` is a {found}, not a map")]
    NotAMap { path: String, found: &'static str },
    #[error("unknown {kind} `{name}` (valid choices: {})", choices.join(", "))]
    UnknownComponent {
        kind: &'static str,
        name: String,
        choices: Vec<String>,
    },
    #[error("missing configuration file {0}")]
    MissingFile(PathBuf),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_yaml(text: &str) -> Result<ConfigTree, ConfigError> {
    yaml::parse(text)
}

pub fn to_yaml(tree: &ConfigTree) -> String {
    yaml::to_yaml(tree)
}

/// Reads and parses one YAML file, attaching the path to parse errors.
pub fn read_yaml_file(path: &Path) -> Result<ConfigTree, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ConfigError::MissingFile(path.to_path_buf()),
        _ => ConfigError::Io(e),
    })?;
    yaml::parse(&text).map_err(|e| match e {
        ConfigError::Parse { line, msg } => ConfigError::ParseFile {
            path: path.to_path_buf(),
            line,
            msg,
        },
        other => other,
    })
}

/// Algorithm names with a defaults file under `<conf_dir>/algorithm/`.
pub fn list_algorithms(conf_dir: &Path) -> Result<Vec<String>, ConfigError> {
    let dir = conf_dir.join("algorithm");
    let entries = std::fs::read_dir(&dir).map_err(|_| ConfigError::MissingFile(dir.clone()))?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix(".yaml").map(str::to_string))
        .filter(|n| !n.contains('@'))
        .collect();
    names.sort();
    Ok(names)
}

/// Algorithm defaults with the algorithm+environment overlay merged on top.
pub fn load_defaults(conf_dir: &Path, algorithm: &str, env: &str) -> Result<ConfigTree, ConfigError> {
    let dir = conf_dir.join("algorithm");
    let base_path = dir.join(format!("{algorithm}.yaml"));
    if !base_path.exists() {
        return Err(ConfigError::UnknownComponent {
            kind: "algorithm",
            name: algorithm.into(),
            choices: list_algorithms(conf_dir).unwrap_or_default(),
        });
    }
    let mut tree = read_yaml_file(&base_path)?;
    let overlay = dir.join(format!("{algorithm}@{env}.yaml"));
    if overlay.exists() {
        tree.merge(&read_yaml_file(&overlay)?);
    }
    Ok(tree)
}

/// Full resolution of command-line tokens into a run configuration.
pub fn resolve<S: AsRef<str>>(conf_dir: &Path, tokens: &[S]) -> Result<ConfigTree, ConfigError> {
    let directives = OverrideDirective::parse_all(tokens)?;
    resolve_directives(conf_dir, &directives)
}

pub fn resolve_directives(conf_dir: &Path, directives: &[OverrideDirective]) -> Result<ConfigTree, ConfigError> {
    let mut algorithm = DEFAULT_ALGORITHM.to_string();
    let mut env = DEFAULT_ENV.to_string();
    let mut rest = Vec::new();
    for d in directives {
        match (d.path.as_str(), d.mode) {
            ("algorithm", OverrideMode::Replace) => algorithm = d.value.to_string(),
            ("env", OverrideMode::Replace) => env = d.value.to_string(),
            _ => rest.push(d.clone()),
        }
    }
    if !ENV_NAMES.contains(&env.as_str()) {
        return Err(ConfigError::UnknownComponent {
            kind: "environment",
            name: env,
            choices: ENV_NAMES.iter().map(|s| s.to_string()).collect(),
        });
    }
    let mut algo_tree = load_defaults(conf_dir, &algorithm, &env)?;
    algo_tree.set("name", Value::Str(algorithm))?;

    let mut tree = ConfigTree::new();
    tree.set("algorithm", Value::Map(algo_tree.into_map()))?;
    tree.set("env", Value::Str(env))?;
    tree.set("seed", Value::Int(0))?;
    tree.set("experiment", Value::Str(DEFAULT_EXPERIMENT.into()))?;
    apply_overrides(&tree, &rest)
}
