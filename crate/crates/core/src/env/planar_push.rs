use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clip_action, EnvError, EnvSpec, GoalEnv, GoalObservation, RenderFrame, StepResult};

/// A point agent pushes a block toward a goal on the unit-square platform.
///
/// Per tick:
///
/// 1. `agent <- clamp(agent + MAX_SPEED * action, 0, 1)`.
/// 2. If the block is still on the platform and `d = |block - agent| < CONTACT_RADIUS`,
///    the block moves along the contact normal `n = (block - agent) / d` by
///    `PUSH_GAIN * (CONTACT_RADIUS - d)`.
/// 3. A block whose center leaves `[0, 1]^2` has fallen off: it stays where it
///    left and can no longer be moved.
///
/// Observation is `[agent, block, block - agent, fallen]` (7 values); the achieved
/// goal is the block position.
#[derive(Debug, Clone)]
pub struct PlanarPush {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    agent: [f64; 2],
    block: [f64; 2],
    goal: [f64; 2],
    fallen: bool,
    t: usize,
}

impl PlanarPush {
    pub const NAME: &'static str = "PlanarPush-v0";
    pub const MAX_SPEED: f64 = 0.05;
    pub const CONTACT_RADIUS: f64 = 0.1;
    pub const PUSH_GAIN: f64 = 1.0;
    pub const BLOCK_SPAWN: [f64; 2] = [0.25, 0.75];
    pub const GOAL_SPAWN: [f64; 2] = [0.15, 0.85];
    pub const MIN_GOAL_DISTANCE: f64 = 0.15;

    pub fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: Self::NAME,
                obs_dim: 7,
                goal_dim: 2,
                action_dim: 2,
                max_episode_steps: 50,
                success_threshold: 0.05,
            },
            rng: ChaCha8Rng::seed_from_u64(0),
            agent: [0.1, 0.1],
            block: [0.5, 0.5],
            goal: [0.8, 0.8],
            fallen: false,
            t: 0,
        }
    }

    pub fn agent(&self) -> [f64; 2] {
        self.agent
    }

    pub fn block(&self) -> [f64; 2] {
        self.block
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn block_fallen(&self) -> bool {
        self.fallen
    }

    /// Starts an episode from an explicit state (scripted scenarios).
    pub fn reset_to(&mut self, agent: [f64; 2], block: [f64; 2], goal: [f64; 2]) -> GoalObservation {
        self.agent = agent;
        self.block = block;
        self.goal = goal;
        self.fallen = !on_platform(block);
        self.t = 0;
        self.observe()
    }

    fn observe(&self) -> GoalObservation {
        GoalObservation {
            observation: vec![
                self.agent[0],
                self.agent[1],
                self.block[0],
                self.block[1],
                self.block[0] - self.agent[0],
                self.block[1] - self.agent[1],
                if self.fallen { 1.0 } else { 0.0 },
            ],
            achieved_goal: self.block.to_vec(),
            desired_goal: self.goal.to_vec(),
        }
    }

    fn sample_in(&mut self, range: [f64; 2]) -> [f64; 2] {
        [
            self.rng.gen_range(range[0]..range[1]),
            self.rng.gen_range(range[0]..range[1]),
        ]
    }
}

impl Default for PlanarPush {
    fn default() -> Self {
        Self::new()
    }
}

fn on_platform(p: [f64; 2]) -> bool {
    p.iter().all(|&x| (0.0..=1.0).contains(&x))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl GoalEnv for PlanarPush {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: Option<u64>) -> GoalObservation {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        self.block = self.sample_in(Self::BLOCK_SPAWN);
        self.goal = loop {
            let g = self.sample_in(Self::GOAL_SPAWN);
            if dist(g, self.block) > Self::MIN_GOAL_DISTANCE {
                break g;
            }
        };
        self.agent = loop {
            let a = self.sample_in([0.05, 0.95]);
            if dist(a, self.block) >= Self::CONTACT_RADIUS + 0.02 {
                break a;
            }
        };
        self.fallen = false;
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult, EnvError> {
        let a = clip_action(action, self.spec.action_dim)?;
        for i in 0..2 {
            self.agent[i] = (self.agent[i] + Self::MAX_SPEED * a[i]).clamp(0.0, 1.0);
        }
        if !self.fallen {
            let d = dist(self.block, self.agent);
            if d < Self::CONTACT_RADIUS {
                let n = if d > 0.0 {
                    [(self.block[0] - self.agent[0]) / d, (self.block[1] - self.agent[1]) / d]
                } else {
                    let norm = (a[0] * a[0] + a[1] * a[1]).sqrt();
                    if norm > 0.0 {
                        [a[0] / norm, a[1] / norm]
                    } else {
                        [1.0, 0.0]
                    }
                };
                let shift = Self::PUSH_GAIN * (Self::CONTACT_RADIUS - d);
                self.block[0] += shift * n[0];
                self.block[1] += shift * n[1];
                self.fallen = !on_platform(self.block);
            }
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
            agent: self.agent,
            block: Some(self.block),
            block_fallen: self.fallen,
            goal: self.goal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_within_arena_and_deterministic() {
        let mut env = PlanarPush::new();
        for seed in 0..300 {
            let o = env.reset(Some(seed));
            assert!(o.achieved_goal.iter().all(|x| (0.25..=0.75).contains(x)));
            assert!(o.desired_goal.iter().all(|x| (0.15..=0.85).contains(x)));
            assert!(env.agent().iter().all(|x| (0.0..=1.0).contains(x)));
            assert_eq!(o.observation[6], 0.0);
            assert_eq!(env.reset(Some(seed)), o);
        }
    }

    #[test]
    fn one_step_push_matches_hand_computation() {
        let mut env = PlanarPush::new();
        env.reset_to([0.40, 0.50], [0.52, 0.50], [0.9, 0.9]);
        // agent moves to 0.45; d = 0.07; block shifts by 1.0 * (0.1 - 0.07) = 0.03 along +x
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert!((env.agent()[0] - 0.45).abs() < 1e-12);
        assert!((env.block()[0] - 0.55).abs() < 1e-12, "{:?}", env.block());
        assert!((env.block()[1] - 0.50).abs() < 1e-12);
        assert_eq!(r.obs.achieved_goal, env.block().to_vec());
    }

    #[test]
    fn diagonal_contact_pushes_along_normal() {
        let mut env = PlanarPush::new();
        // agent ends at (0.5, 0.5); block offset (0.03, 0.04), so d = 0.05
        env.reset_to([0.45, 0.5], [0.53, 0.54], [0.1, 0.1]);
        env.step(&[1.0, 0.0]).unwrap();
        let d = (0.03f64 * 0.03 + 0.04 * 0.04).sqrt();
        let shift = 0.1 - d;
        assert!((env.block()[0] - (0.53 + shift * 0.03 / d)).abs() < 1e-12);
        assert!((env.block()[1] - (0.54 + shift * 0.04 / d)).abs() < 1e-12);
    }

    #[test]
    fn block_falls_off_the_edge_and_stays() {
        let mut env = PlanarPush::new();
        env.reset_to([0.86, 0.5], [0.97, 0.5], [0.5, 0.5]);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert!(env.block_fallen());
        assert_eq!(r.obs.observation[6], 1.0);
        let parked = env.block();
        assert!(parked[0] > 1.0);
        env.step(&[1.0, 0.0]).unwrap();
        env.step(&[-1.0, 0.0]).unwrap();
        assert_eq!(env.block(), parked);
        assert!(env.render_state().block_fallen);
    }

    #[test]
    fn episode_is_bounded() {
        let mut env = PlanarPush::new();
        env.reset(Some(3));
        let mut n = 0;
        loop {
            n += 1;
            if env.step(&[0.3, -0.2]).unwrap().done {
                break;
            }
        }
        assert!(n <= 50);
    }
}
