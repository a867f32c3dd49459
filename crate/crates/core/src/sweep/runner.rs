//! Study execution: one coordinator, up to `n_jobs` concurrent trial workers.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::mpsc;

use serde::Serialize;

use super::journal::{Journal, JournalEvent};
use super::{override_token, Direction, Plan, StudyConfig, StudyState, SweepError, TrialStatus};

pub const JOURNAL_FILE: &str = "journal.ndjson";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

/// What a launcher receives.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRequest {
    pub study_name: String,
    pub trial_id: u64,
    pub config_index: usize,
    /// Base overrides followed by the trial's assignment, ready for config resolution.
    pub overrides: Vec<String>,
    pub objective_metric: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Complete { objective: f64, run_id: Option<String> },
    Failed { error: String, run_id: Option<String> },
    Pruned { reason: String, run_id: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub index: usize,
    pub params: Vec<(String, String)>,
    /// Mean objective over completed trials.
    pub mean: Option<f64>,
    pub complete: usize,
    pub failed: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub config_index: usize,
    pub status: TrialStatus,
    pub objective: Option<f64>,
    pub run_id: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub study_name: String,
    pub direction: Direction,
    pub objective_metric: String,
    pub policy: String,
    pub best: Option<ConfigSummary>,
    pub configurations: Vec<ConfigSummary>,
    pub trials: Vec<TrialRecord>,
}

impl StudyReport {
    pub fn from_state(state: &StudyState) -> Self {
        let c = &state.config;
        let configurations = state.summaries();
        StudyReport {
            study_name: c.study_name.clone(),
            direction: c.direction,
            objective_metric: c.objective_metric.clone(),
            policy: format!(
                "repeat-and-prune: {} trial(s) per configuration first, then best mean until {} per configuration; budget {}",
                c.min_trials_per_param, c.max_trials_per_param, c.max_trials
            ),
            best: state.best().map(|i| configurations[i].clone()),
            configurations,
            trials: state
                .trials
                .iter()
                .map(|t| TrialRecord {
                    trial_id: t.trial_id,
                    config_index: t.config_index,
                    status: t.status,
                    objective: t.objective,
                    run_id: t.run_id.clone(),
                    error: t.error.clone(),
                })
                .collect(),
        }
    }

    /// Configurations ranked by mean (best first, untried last, ties by index).
    pub fn ranked(&self) -> Vec<&ConfigSummary> {
        let mut rows: Vec<&ConfigSummary> = self.configurations.iter().collect();
        let dir = self.direction;
        rows.sort_by(|a, b| match (a.mean, b.mean) {
            (Some(x), Some(y)) if dir.better(x, y) => std::cmp::Ordering::Less,
            (Some(x), Some(y)) if dir.better(y, x) => std::cmp::Ordering::Greater,
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            _ => a.index.cmp(&b.index),
        });
        rows
    }
}

pub fn render_report(report: &StudyReport) -> String {
    let label = |c: &ConfigSummary| {
        c.params
            .iter()
            .map(|(k, v)| format!("{}={v}", k.trim_start_matches('+')))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let rows = report.ranked();
    let width = rows.iter().map(|c| label(c).len()).max().unwrap_or(0).max(13);
    let mut out = String::new();
    let _ = writeln!(out, "study {} ({:?} {})", report.study_name, report.direction, report.objective_metric);
    let _ = writeln!(out, "policy: {}", report.policy);
    let _ = writeln!(out, "{:>4}  {:<width$}  {:>10}  {:>8}  {:>6}  {:>6}", "rank", "configuration", "mean", "complete", "failed", "trials");
    for (rank, c) in rows.iter().enumerate() {
        let mean = c.mean.map(|m| format!("{m:.4}")).unwrap_or_else(|| "-".into());
        let mark = if report.best.as_ref().map(|b| b.index) == Some(c.index) { "*" } else { " " };
        let _ = writeln!(
            out,
            "{:>3}{mark}  {:<width$}  {:>10}  {:>8}  {:>6}  {:>6}",
            rank + 1,
            label(c),
            mean,
            c.complete,
            c.failed,
            c.trials
        );
    }
    for t in report.trials.iter().filter(|t| t.status != TrialStatus::Complete) {
        let _ = writeln!(
            out,
            "trial {} ({:?}): {}",
            t.trial_id,
            t.status,
            t.error.as_deref().unwrap_or("")
        );
    }
    out
}

/// Runs the study to completion. With `study_dir` the journal lives there
/// (an existing journal is resumed; trials it shows as running are recorded
/// as interrupted failures) and the report is written next to it.
pub fn run_study<L>(config: StudyConfig, launcher: &L, study_dir: Option<&Path>) -> Result<StudyReport, SweepError>
where
    L: Fn(&TrialRequest) -> TrialOutcome + Sync,
{
    let (mut journal, mut state) = match study_dir {
        Some(dir) => {
            let (j, s) = Journal::open(&dir.join(JOURNAL_FILE), config)?;
            (Some(j), s)
        }
        None => (None, StudyState::new(config)?),
    };
    let mut log = |ev: &JournalEvent| -> Result<(), SweepError> {
        match journal.as_mut() {
            Some(j) => j.append(ev),
            None => Ok(()),
        }
    };
    let stale: Vec<u64> = state
        .trials
        .iter()
        .filter(|t| t.status == TrialStatus::Running)
        .map(|t| t.trial_id)
        .collect();
    for id in stale {
        let o = TrialOutcome::Failed {
            error: "interrupted".into(),
            run_id: None,
        };
        state.record_result(id, &o)?;
        log(&JournalEvent::finished(id, &o))?;
    }

    let n_jobs = state.config.n_jobs;
    std::thread::scope(|scope| -> Result<(), SweepError> {
        let (tx, rx) = mpsc::channel::<(u64, TrialOutcome)>();
        let mut in_flight = 0usize;
        loop {
            let mut blocked = in_flight >= n_jobs;
            if !blocked {
                match state.plan_next_trial() {
                    Plan::Trial(t) => {
                        log(&JournalEvent::planned(&t))?;
                        let mut overrides = state.config.base_overrides.clone();
                        overrides.extend(t.params.iter().map(|(k, v)| override_token(k, v)));
                        let req = TrialRequest {
                            study_name: state.config.study_name.clone(),
                            trial_id: t.trial_id,
                            config_index: t.config_index,
                            overrides,
                            objective_metric: state.config.objective_metric.clone(),
                        };
                        let tx = tx.clone();
                        in_flight += 1;
                        scope.spawn(move || {
                            let outcome = catch_unwind(AssertUnwindSafe(|| launcher(&req))).unwrap_or_else(|p| {
                                let msg = p
                                    .downcast_ref::<String>()
                                    .cloned()
                                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                                    .unwrap_or_else(|| "launcher panicked".into());
                                TrialOutcome::Failed {
                                    error: format!("panic: {msg}"),
                                    run_id: None,
                                }
                            });
                            let _ = tx.send((req.trial_id, outcome));
                        });
                        continue;
                    }
                    Plan::Wait => blocked = true,
                    Plan::Done if in_flight == 0 => return Ok(()),
                    Plan::Done => blocked = true,
                }
            }
            if blocked {
                let (id, outcome) = rx.recv().expect("workers hold a sender while in flight");
                in_flight -= 1;
                state.record_result(id, &outcome)?;
                log(&JournalEvent::finished(id, &outcome))?;
            }
        }
    })?;

    let report = StudyReport::from_state(&state);
    if let Some(dir) = study_dir {
        let json = serde_json::to_string_pretty(&report).map_err(|e| SweepError::Journal {
            path: dir.join(REPORT_JSON),
            msg: e.to_string(),
        })?;
        std::fs::write(dir.join(REPORT_JSON), json + "\n")?;
        std::fs::write(dir.join(REPORT_TXT), render_report(&report))?;
    }
    Ok(report)
}
