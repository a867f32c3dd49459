//! Goal-conditioned environments behind a gym-style reset/step interface.
//!
//! Rewards are sparse: `0` when the achieved goal is within
//! `success_threshold` (inclusive) of the desired goal, `-1` otherwise.
//! An episode ends on success or after `max_episode_steps`.

mod planar_push;
mod point_reach;

use serde::{Deserialize, Serialize};

pub use planar_push::PlanarPush;
pub use point_reach::PointReach;

pub const ENV_NAMES: [&str; 2] = [PointReach::NAME, PlanarPush::NAME];

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("action has {got} components, environment expects {expected}")]
    ActionShape { expected: usize, got: usize },
    #[error("goal vectors differ in length ({0} vs {1})")]
    GoalShape(usize, usize),
    #[error("unknown environment `{name}` (available: {})", ENV_NAMES.join(", "))]
    Unknown { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalObservation {
    pub observation: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
}

impl GoalObservation {
    /// `observation || desired_goal`, the vector the networks consume.
    pub fn policy_input(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.observation.len() + self.desired_goal.len());
        v.extend_from_slice(&self.observation);
        v.extend_from_slice(&self.desired_goal);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: GoalObservation,
    pub reward: f64,
    pub done: bool,
    pub is_success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub goal_dim: usize,
    pub action_dim: usize,
    pub max_episode_steps: usize,
    pub success_threshold: f64,
}

/// Snapshot of everything needed to draw the scene in 2-D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderFrame {
    pub env: String,
    /// Steps taken in the current episode.
    pub t: u64,
    /// Arena is the square `[arena[0], arena[1]]^2`.
    pub arena: [f64; 2],
    pub agent: [f64; 2],
    pub block: Option<[f64; 2]>,
    pub block_fallen: bool,
    pub goal: [f64; 2],
}

pub trait GoalEnv: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode. `Some(seed)` reseeds the episode generator.
    fn reset(&mut self, seed: Option<u64>) -> GoalObservation;

    /// Advances one tick; action components are clipped to `[-1, 1]`.
    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError>;

    fn render_state(&self) -> RenderFrame;

    fn compute_reward(&self, achieved_goal: &[f64], desired_goal: &[f64]) -> Result<f64, EnvError> {
        sparse_reward(achieved_goal, desired_goal, self.spec().success_threshold)
    }
}

/// `0` if `||achieved - desired|| <= threshold`, else `-1`.
pub fn sparse_reward(achieved: &[f64], desired: &[f64], threshold: f64) -> Result<f64, EnvError> {
    if achieved.len() != desired.len() {
        return Err(EnvError::GoalShape(achieved.len(), desired.len()));
    }
    let d2: f64 = achieved.iter().zip(desired).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(if d2.sqrt() <= threshold { 0.0 } else { -1.0 })
}

/// Builds an environment by registry name.
pub fn make(name: &str) -> Result<Box<dyn GoalEnv>, EnvError> {
    match name {
        PointReach::NAME => Ok(Box::new(PointReach::new())),
        PlanarPush::NAME => Ok(Box::new(PlanarPush::new())),
        _ => Err(EnvError::Unknown { name: name.into() }),
    }
}

pub(crate) fn clip_action(action: &[f64], dim: usize) -> Result<Vec<f64>, EnvError> {
    if action.len() != dim {
        return Err(EnvError::ActionShape {
            expected: dim,
            got: action.len(),
        });
    }
    // NaN maps to 0 so a bad policy output cannot poison the state.
    Ok(action
        .iter()
        .map(|a| if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reward_at_goal_and_boundary() {
        assert_eq!(sparse_reward(&[0.3, 0.4], &[0.3, 0.4], 0.05).unwrap(), 0.0);
        // distance exactly 0.5 with threshold 0.5
        assert_eq!(sparse_reward(&[0.0, 0.0], &[0.3, 0.4], 0.5).unwrap(), 0.0);
        assert_eq!(sparse_reward(&[0.0, 0.0], &[0.3, 0.41], 0.5).unwrap(), -1.0);
        assert!(sparse_reward(&[0.0], &[0.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn reward_agrees_with_direct_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let a = [rng.gen::<f64>(), rng.gen::<f64>()];
            let b = [a[0] + rng.gen_range(-0.1..0.1), a[1] + rng.gen_range(-0.1..0.1)];
            let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            let want = if dist <= 0.05 { 0.0 } else { -1.0 };
            assert_eq!(sparse_reward(&a, &b, 0.05).unwrap(), want);
        }
    }

    #[test]
    fn registry() {
        for name in ENV_NAMES {
            assert_eq!(make(name).unwrap().spec().name, name);
        }
        let err = make("FetchPush-v1").err().unwrap().to_string();
        assert!(err.contains("PointReach-v0"), "{err}");
    }

    #[test]
    fn clipping_and_shape() {
        assert_eq!(clip_action(&[2.0, -3.0], 2).unwrap(), vec![1.0, -1.0]);
        assert!(matches!(clip_action(&[0.0], 2), Err(EnvError::ActionShape { .. })));
    }
}
