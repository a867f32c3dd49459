//! Command-line entry point.
//!
//! ```text
//! gcrl run [KEY=VALUE | ++KEY=VALUE]...
//! gcrl sweep <STUDY.yaml> [OVERRIDE]...
//! gcrl view --follow <RUN_DIR> | --replay <STREAM.ndjson> [--metrics a,b]
//! gcrl test smoke | gcrl test perf [OVERRIDE]...
//! ```
//!
//! Exit codes: 0 success, 1 failure (including failed tests), 2 configuration
//! error, 3 numeric error during training.

pub mod harness;
pub mod run;
pub mod view;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{read_yaml_file, ConfigError};
use crate::livemetrics::StreamError;
use crate::sacvar::SacError;
use crate::sweep::{render_report, run_study, StudyConfig, SweepError};
use crate::track::{TrackError, Tracker};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Other(_) => EXIT_FAILURE,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SacError> for CliError {
    fn from(e: SacError) -> Self {
        match e {
            SacError::Config(m) => CliError::Config(m),
            SacError::Numeric { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Config(m) => CliError::Config(m),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<TrackError> for CliError {
    fn from(e: TrackError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        match e {
            StreamError::UnknownMetric { .. } => CliError::Config(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gcrl", version, about = "Goal-conditioned RL: train, sweep, track and watch")]
pub struct Cli {
    /// Directory holding algorithm/, sweep/ and test/ configuration files.
    #[arg(long, global = true, default_value = "conf", env = "GCRL_CONF_DIR")]
    pub conf_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one tracked run, e.g. `run algorithm=sac_var env=PointReach-v0 ++algorithm.weight_critic_var=0.75`.
    Run {
        /// Do not record the live stream artifact.
        #[arg(long)]
        no_stream: bool,
        overrides: Vec<String>,
    },
    /// Run a hyperparameter study; an interrupted study resumes from its journal.
    Sweep {
        study: PathBuf,
        /// Discard an existing journal for this study first.
        #[arg(long)]
        fresh: bool,
        overrides: Vec<String>,
    },
    /// Watch a run live or replay a recorded stream.
    View {
        #[arg(long, conflicts_with = "replay", required_unless_present = "replay")]
        follow: Option<PathBuf>,
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Comma-separated metric names (default: all).
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        #[arg(long, default_value_t = 10.0)]
        refresh_hz: f64,
        /// Sparkline window in steps.
        #[arg(long, default_value_t = crate::livemetrics::DEFAULT_WINDOW)]
        window: usize,
        /// Replay: start at this step.
        #[arg(long)]
        at: Option<u64>,
        /// Render once and exit.
        #[arg(long)]
        once: bool,
    },
    /// Built-in test protocols.
    Test {
        #[command(subcommand)]
        which: TestCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum TestCommand {
    /// Every algorithm x environment pair for a short pinned protocol.
    Smoke {
        /// Poison a critic weight with NaN (checks numeric-error reporting).
        #[arg(long)]
        inject_nan: bool,
    },
    /// Learning-performance gate over the pinned seeds.
    Perf { overrides: Vec<String> },
}

/// Directory for a study's journal and report under the tracker root.
pub fn study_dir(tracker: &Tracker, study_name: &str) -> PathBuf {
    tracker.root().join(".sweeps").join(study_name)
}

pub fn cmd_run(conf_dir: &Path, overrides: &[String], record_stream: bool) -> Result<run::RunSummary, CliError> {
    let tracker = Tracker::from_env();
    let opts = run::RunOptions {
        record_stream,
        ..Default::default()
    };
    let s = run::execute_run(conf_dir, overrides, &tracker, opts)?;
    println!("run {} -> {}", s.run_id, s.run_dir.display());
    println!("final success_rate: {}", s.outcome.final_success_rate);
    Ok(s)
}

pub fn cmd_sweep(conf_dir: &Path, study: &Path, overrides: &[String], fresh: bool) -> Result<crate::sweep::StudyReport, CliError> {
    let mut cfg = StudyConfig::from_tree(&read_yaml_file(study)?)?;
    cfg.base_overrides.extend(overrides.iter().cloned());
    // fail fast on a base configuration that cannot resolve
    crate::config::resolve(conf_dir, &cfg.base_overrides)?;
    let tracker = Tracker::from_env();
    let dir = study_dir(&tracker, &cfg.study_name);
    if fresh && dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    let launcher = run::sweep_launcher(conf_dir, &tracker);
    let report = run_study(cfg, &launcher, Some(&dir))?;
    print!("{}", render_report(&report));
    println!("journal and report: {}", dir.display());
    Ok(report)
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let conf = cli.conf_dir.as_path();
    let result: Result<i32, CliError> = match &cli.command {
        Command::Run { no_stream, overrides } => cmd_run(conf, overrides, !no_stream).map(|_| EXIT_OK),
        Command::Sweep { study, fresh, overrides } => cmd_sweep(conf, study, overrides, *fresh).map(|_| EXIT_OK),
        Command::View {
            follow,
            replay,
            metrics,
            refresh_hz,
            window,
            at,
            once,
        } => {
            let opts = view::ViewOptions {
                metrics: metrics.clone(),
                refresh_hz: *refresh_hz,
                window: *window,
                once: *once,
                at: *at,
            };
            match (follow, replay) {
                (Some(f), _) => view::follow(f, &opts),
                (None, Some(r)) => view::replay(r, &opts),
                (None, None) => Err(CliError::Config("view needs --follow or --replay".into())),
            }
            .map(|_| EXIT_OK)
        }
        Command::Test {
            which: TestCommand::Smoke { inject_nan },
        } => harness::run_smoke(conf, &harness::SmokeOptions { inject_nan: *inject_nan }).map(|r| {
            print!("{}", r.render());
            if r.passed() {
                EXIT_OK
            } else if r.combos.iter().any(|c| c.detail.starts_with("numeric error")) {
                EXIT_NUMERIC
            } else {
                EXIT_FAILURE
            }
        }),
        Command::Test {
            which: TestCommand::Perf { overrides },
        } => harness::run_perf(conf, overrides).map(|r| {
            print!("{}", r.render());
            if r.passed() {
                EXIT_OK
            } else {
                EXIT_FAILURE
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
