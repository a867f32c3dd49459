//! Append-only NDJSON journal of study events. Replaying it rebuilds the
//! exact [`StudyState`]; a torn final line (crash mid-write) is discarded.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{override_token, Direction, Plan, StudyConfig, StudyState, SweepError, Trial, TrialOutcome, TrialStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum JournalEvent {
    Study {
        study_name: String,
        direction: Direction,
        configurations: Vec<Vec<String>>,
    },
    Planned {
        trial_id: u64,
        config_index: usize,
        params: Vec<String>,
    },
    Finished {
        trial_id: u64,
        status: TrialStatus,
        objective: Option<f64>,
        run_id: Option<String>,
        error: Option<String>,
    },
}

impl JournalEvent {
    fn header(state: &StudyState) -> Self {
        JournalEvent::Study {
            study_name: state.config.study_name.clone(),
            direction: state.config.direction,
            configurations: state.configurations.iter().map(|a| tokens(a)).collect(),
        }
    }

    pub fn planned(t: &Trial) -> Self {
        JournalEvent::Planned {
            trial_id: t.trial_id,
            config_index: t.config_index,
            params: tokens(&t.params),
        }
    }

    pub fn finished(trial_id: u64, outcome: &TrialOutcome) -> Self {
        let (status, objective, run_id, error) = match outcome {
            TrialOutcome::Complete { objective, run_id } if objective.is_finite() => {
                (TrialStatus::Complete, Some(*objective), run_id, None)
            }
            TrialOutcome::Complete { objective, run_id } => (
                TrialStatus::Failed,
                None,
                run_id,
                Some(format!("non-finite objective {objective}")),
            ),
            TrialOutcome::Failed { error, run_id } => (TrialStatus::Failed, None, run_id, Some(error.clone())),
            TrialOutcome::Pruned { reason, run_id } => (TrialStatus::Pruned, None, run_id, Some(reason.clone())),
        };
        JournalEvent::Finished {
            trial_id,
            status,
            objective,
            run_id: run_id.clone(),
            error,
        }
    }
}

fn tokens(a: &[(String, crate::config::Value)]) -> Vec<String> {
    a.iter().map(|(k, v)| override_token(k, v)).collect()
}

/// Applies `events` to a fresh state for `config`, checking consistency.
pub fn replay(config: StudyConfig, events: &[JournalEvent]) -> Result<StudyState, String> {
    let mut state = StudyState::new(config).map_err(|e| e.to_string())?;
    let mut it = events.iter();
    match it.next() {
        None => return Ok(state),
        Some(h @ JournalEvent::Study { .. }) => {
            if *h != JournalEvent::header(&state) {
                return Err("journal belongs to a different study definition".into());
            }
        }
        Some(_) => return Err("journal does not start with a study header".into()),
    }
    for ev in it {
        match ev {
            JournalEvent::Study { .. } => return Err("duplicate study header".into()),
            JournalEvent::Planned { trial_id, config_index, .. } => match state.plan_next_trial() {
                Plan::Trial(t) if t.trial_id == *trial_id && t.config_index == *config_index => {
                    if JournalEvent::planned(&t) != *ev {
                        return Err(format!("trial {trial_id} parameters differ"));
                    }
                }
                other => {
                    return Err(format!(
                        "trial {trial_id} (configuration {config_index}) does not match the schedule ({other:?})"
                    ))
                }
            },
            JournalEvent::Finished {
                trial_id,
                status,
                objective,
                run_id,
                error,
            } => {
                let outcome = match (status, objective) {
                    (TrialStatus::Complete, Some(o)) => TrialOutcome::Complete {
                        objective: *o,
                        run_id: run_id.clone(),
                    },
                    (TrialStatus::Failed, _) => TrialOutcome::Failed {
                        error: error.clone().unwrap_or_default(),
                        run_id: run_id.clone(),
                    },
                    (TrialStatus::Pruned, _) => TrialOutcome::Pruned {
                        reason: error.clone().unwrap_or_default(),
                        run_id: run_id.clone(),
                    },
                    _ => return Err(format!("trial {trial_id}: inconsistent finish record")),
                };
                state.record_result(*trial_id, &outcome).map_err(|e| e.to_string())?;
            }
        }
    }
    Ok(state)
}

/// Parses journal text, ignoring a final line without newline.
pub fn parse_events(text: &str) -> Result<Vec<JournalEvent>, String> {
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    complete
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Opens (replaying) or creates the journal at `path`.
    pub fn open(path: &Path, config: StudyConfig) -> Result<(Journal, StudyState), SweepError> {
        let err = |msg: String| SweepError::Journal {
            path: path.to_path_buf(),
            msg,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(e.into()),
        };
        let events = parse_events(&text).map_err(err)?;
        let state = replay(config, &events).map_err(err)?;
        let keep = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        if keep < text.len() {
            file.set_len(keep as u64)?;
        }
        let mut journal = Journal {
            path: path.to_path_buf(),
            file,
        };
        if events.is_empty() {
            journal.append(&JournalEvent::header(&state))?;
        }
        Ok((journal, state))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one event line and syncs it before returning.
    pub fn append(&mut self, event: &JournalEvent) -> Result<(), SweepError> {
        let mut line = serde_json::to_string(event).map_err(|e| SweepError::Journal {
            path: self.path.clone(),
            msg: e.to_string(),
        })?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::FULL_STUDY;
    use super::*;
    use crate::config::parse_yaml;

    fn cfg() -> StudyConfig {
        let mut c = StudyConfig::from_tree(&parse_yaml(FULL_STUDY).unwrap()).unwrap();
        c.max_trials = 20;
        c
    }

    #[test]
    fn reload_gives_identical_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.ndjson");
        let (mut j, mut s) = Journal::open(&path, cfg()).unwrap();
        for k in 0..12 {
            let Plan::Trial(t) = s.plan_next_trial() else { panic!() };
            j.append(&JournalEvent::planned(&t)).unwrap();
            if k % 4 != 3 {
                let o = TrialOutcome::Complete {
                    objective: k as f64 / 10.0,
                    run_id: Some(format!("r{k}")),
                };
                s.record_result(t.trial_id, &o).unwrap();
                j.append(&JournalEvent::finished(t.trial_id, &o)).unwrap();
            }
        }
        drop(j);
        // torn final write
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event\":\"fini").unwrap();
        drop(f);
        let (_, back) = Journal::open(&path, cfg()).unwrap();
        assert_eq!(back, s);
        assert!(fs::read_to_string(&path).unwrap().ends_with('\n'));
    }

    #[test]
    fn mismatched_study_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.ndjson");
        Journal::open(&path, cfg()).unwrap();
        let mut other = cfg();
        other.search_space.entries[0].choices.pop();
        assert!(matches!(Journal::open(&path, other), Err(SweepError::Journal { .. })));
    }
}
