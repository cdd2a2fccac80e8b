use super::{clip_action, Env, StepResult};

/// Goal-reaching in the plane. Start (0,0), goal (1,1), actions clipped
/// to [-0.1, 0.1] per axis. Dense reward is the negative distance to
/// the goal; sparse reward is 1 inside the goal radius. Reaching the
/// goal terminates the episode.
pub struct Point2d {
    pos: [f64; 2],
    step_count: usize,
}

pub const GOAL: [f64; 2] = [1.0, 1.0];
pub const GOAL_RADIUS: f64 = 0.1;
pub const MAX_STEP: f64 = 0.1;
pub const HORIZON: usize = 100;

impl Point2d {
    pub fn new() -> Self {
        Point2d {
            pos: [0.0, 0.0],
            step_count: 0,
        }
    }

    fn distance_to_goal(&self) -> f64 {
        let dx = self.pos[0] - GOAL[0];
        let dy = self.pos[1] - GOAL[1];
        (dx * dx + dy * dy).sqrt()
    }

    #[cfg(test)]
    pub(crate) fn set_position(&mut self, pos: [f64; 2]) {
        self.pos = pos;
    }
}

impl Default for Point2d {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for Point2d {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_scale(&self) -> Vec<f64> {
        vec![MAX_STEP, MAX_STEP]
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn reset(&mut self) -> Vec<f64> {
        self.pos = [0.0, 0.0];
        self.step_count = 0;
        self.pos.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let a = clip_action(action, &self.action_scale());
        self.pos[0] += a[0];
        self.pos[1] += a[1];
        self.step_count += 1;
        let dist = self.distance_to_goal();
        let reached = dist < GOAL_RADIUS;
        StepResult {
            next_state: self.pos.to_vec(),
            reward_sparse: if reached { 1.0 } else { 0.0 },
            reward_dense: -dist,
            done: reached || self.step_count >= HORIZON,
        }
    }
}
