//! Episode-granular replay storage with hindsight goal relabeling.
//!
//! Relabeling uses the "future" strategy: the desired goal of a sampled
//! transition at step `t` is replaced by the achieved goal reached after a
//! uniformly chosen step `f >= t` of the same episode, and the reward is
//! recomputed for the new goal.
//!
//! Success terminates an episode, so a row is terminal exactly when its
//! (possibly recomputed) reward is `0`. Time-limit truncation is not terminal.

use std::collections::VecDeque;

use rand::Rng;

use crate::env::GoalObservation;
use crate::nn::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("cannot store an empty episode")]
    EmptyEpisode,
    #[error("episode of {len} steps exceeds buffer capacity {capacity}")]
    EpisodeTooLong { len: usize, capacity: usize },
    #[error("replay buffer is empty")]
    Empty,
    #[error("her_ratio must lie in [0, 1], got {0}")]
    Ratio(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: GoalObservation,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: GoalObservation,
    pub done: bool,
}

#[derive(Debug, Clone)]
struct StoredEpisode {
    /// Global index of the first transition, counting every transition ever stored.
    start: u64,
    steps: Vec<Transition>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<StoredEpisode>,
    size: usize,
    next_start: u64,
}

/// Columnar batch ready for the learner. Goals are already appended to the
/// observation columns.
#[derive(Debug, Clone)]
pub struct SampledBatch {
    pub observations: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_observations: Matrix,
    pub dones: Vec<f64>,
    /// Goal achieved after the transition.
    pub achieved_goals: Matrix,
    /// Goal the row is conditioned on (after relabeling).
    pub desired_goals: Matrix,
    pub relabeled: Vec<bool>,
    /// Step index of each row within its episode.
    pub steps: Vec<usize>,
    /// Step whose achieved goal replaced the desired goal, if relabeled.
    pub goal_steps: Vec<Option<usize>>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            episodes: VecDeque::new(),
            size: 0,
            next_start: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of stored transitions.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Stored episodes, oldest first.
    pub fn episodes(&self) -> impl Iterator<Item = &[Transition]> {
        self.episodes.iter().map(|e| e.steps.as_slice())
    }

    /// Appends a whole episode, evicting the oldest episodes to stay within capacity.
    pub fn store_episode(&mut self, episode: Vec<Transition>) -> Result<(), ReplayError> {
        if episode.is_empty() {
            return Err(ReplayError::EmptyEpisode);
        }
        if episode.len() > self.capacity {
            return Err(ReplayError::EpisodeTooLong {
                len: episode.len(),
                capacity: self.capacity,
            });
        }
        let len = episode.len();
        self.episodes.push_back(StoredEpisode {
            start: self.next_start,
            steps: episode,
        });
        self.next_start += len as u64;
        self.size += len;
        while self.size > self.capacity {
            let old = self.episodes.pop_front().expect("size > 0 implies an episode");
            self.size -= old.steps.len();
        }
        Ok(())
    }

    /// Samples `batch_size` transitions uniformly, relabeling each with
    /// probability `her_ratio`.
    pub fn sample_her<R, F>(
        &self,
        batch_size: usize,
        her_ratio: f64,
        compute_reward: F,
        rng: &mut R,
    ) -> Result<SampledBatch, ReplayError>
    where
        R: Rng + ?Sized,
        F: Fn(&[f64], &[f64]) -> f64,
    {
        if self.episodes.is_empty() {
            return Err(ReplayError::Empty);
        }
        if !(0.0..=1.0).contains(&her_ratio) {
            return Err(ReplayError::Ratio(her_ratio));
        }
        let first = &self.episodes[0];
        let obs_dim = first.steps[0].obs.observation.len();
        let goal_dim = first.steps[0].obs.desired_goal.len();
        let act_dim = first.steps[0].action.len();

        let mut observations = Matrix::zeros(batch_size, obs_dim + goal_dim);
        let mut next_observations = Matrix::zeros(batch_size, obs_dim + goal_dim);
        let mut actions = Matrix::zeros(batch_size, act_dim);
        let mut achieved_goals = Matrix::zeros(batch_size, goal_dim);
        let mut desired_goals = Matrix::zeros(batch_size, goal_dim);
        let mut rewards = Vec::with_capacity(batch_size);
        let mut dones = Vec::with_capacity(batch_size);
        let mut relabeled = Vec::with_capacity(batch_size);
        let mut steps = Vec::with_capacity(batch_size);
        let mut goal_steps = Vec::with_capacity(batch_size);

        let base = first.start;
        for row in 0..batch_size {
            let global = base + rng.gen_range(0..self.size as u64);
            let ep_idx = self.episodes.partition_point(|e| e.start <= global) - 1;
            let episode = &self.episodes[ep_idx].steps;
            let t = (global - self.episodes[ep_idx].start) as usize;
            let tr = &episode[t];

            let relabel = rng.gen::<f64>() < her_ratio;
            let (desired, reward, goal_step) = if relabel {
                let f = rng.gen_range(t..episode.len());
                let goal = &episode[f].next_obs.achieved_goal;
                let r = compute_reward(&tr.next_obs.achieved_goal, goal);
                (goal.as_slice(), r, Some(f))
            } else {
                (tr.obs.desired_goal.as_slice(), tr.reward, None)
            };

            let o = observations.row_mut(row);
            o[..obs_dim].copy_from_slice(&tr.obs.observation);
            o[obs_dim..].copy_from_slice(desired);
            let n = next_observations.row_mut(row);
            n[..obs_dim].copy_from_slice(&tr.next_obs.observation);
            n[obs_dim..].copy_from_slice(desired);
            actions.row_mut(row).copy_from_slice(&tr.action);
            achieved_goals.row_mut(row).copy_from_slice(&tr.next_obs.achieved_goal);
            desired_goals.row_mut(row).copy_from_slice(desired);
            rewards.push(reward);
            dones.push(if reward == 0.0 { 1.0 } else { 0.0 });
            relabeled.push(relabel);
            steps.push(t);
            goal_steps.push(goal_step);
        }
        Ok(SampledBatch {
            observations,
            actions,
            rewards,
            next_observations,
            dones,
            achieved_goals,
            desired_goals,
            relabeled,
            steps,
            goal_steps,
        })
    }
}
