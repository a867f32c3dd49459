use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clip_action, EnvError, EnvSpec, GoalEnv, GoalObservation, RenderFrame, StepResult};

/// Point mass in the unit square; the action is a velocity command.
///
/// Dynamics: `pos <- clamp(pos + MAX_SPEED * action, 0, 1)`. The achieved
/// goal is the position itself.
#[derive(Debug, Clone)]
pub struct PointReach {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    pos: [f64; 2],
    goal: [f64; 2],
    t: usize,
}

impl PointReach {
    pub const NAME: &'static str = "PointReach-v0";
    pub const MAX_SPEED: f64 = 0.05;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: Self::NAME,
                obs_dim: 2,
                goal_dim: 2,
                action_dim: 2,
                max_episode_steps: 50,
                success_threshold: 0.05,
            },
            rng: ChaCha8Rng::seed_from_u64(0),
            pos: [0.5, 0.5],
            goal: [0.5, 0.5],
            t: 0,
        }
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    fn observe(&self) -> GoalObservation {
        GoalObservation {
            observation: self.pos.to_vec(),
            achieved_goal: self.pos.to_vec(),
            desired_goal: self.goal.to_vec(),
        }
    }

    /// Move straight toward the goal at full speed per axis.
    pub fn greedy_action(obs: &GoalObservation) -> Vec<f64> {
        obs.desired_goal
            .iter()
            .zip(&obs.achieved_goal)
            .map(|(g, p)| ((g - p) / Self::MAX_SPEED).clamp(-1.0, 1.0))
            .collect()
    }
}

impl Default for PointReach {
    fn default() -> Self {
        Self::new()
    }
}

impl GoalEnv for PointReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: Option<u64>) -> GoalObservation {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        self.pos = [self.rng.gen(), self.rng.gen()];
        self.goal = [self.rng.gen(), self.rng.gen()];
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let a = clip_action(action, self.spec.action_dim)?;
        for i in 0..2 {
            self.pos[i] = (self.pos[i] + Self::MAX_SPEED * a[i]).clamp(0.0, 1.0);
        }
        self.t += 1;
        let obs = self.observe();
        let reward = self.compute_reward(&obs.achieved_goal, &obs.desired_goal)?;
        let is_success = reward == 0.0;
        Ok(StepResult {
            obs,
            reward,
            done: is_success || self.t >= self.spec.max_episode_steps,
            is_success,
        })
    }

    fn render_state(&self) -> RenderFrame {
        RenderFrame {
            env: Self::NAME.into(),
            t: self.t as u64,
            arena: [0.0, 1.0],
            agent: self.pos,
            block: None,
            block_fallen: false,
            goal: self.goal,
        }
    }
}
