use super::{clip_action, Env, StepResult};

/// Double-integrator locomotion analogue: progress along +x is the
/// dense reward, the sparsification wrapper pays 1 per threshold unit
/// crossed. State is (position, velocity), actions are accelerations
/// in [-1, 1] per axis.
pub struct Mass2d {
    pos: [f64; 2],
    vel: [f64; 2],
    step_count: usize,
}

pub const ACCEL_GAIN: f64 = 0.05;
pub const VEL_LIMIT: f64 = 0.5;
pub const POS_GAIN: f64 = 0.1;
pub const HORIZON: usize = 200;

impl Mass2d {
    pub fn new() -> Self {
        Mass2d {
            pos: [0.0, 0.0],
            vel: [0.0, 0.0],
            step_count: 0,
        }
    }

    fn state(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Default for Mass2d {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for Mass2d {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn action_scale(&self) -> Vec<f64> {
        vec![1.0, 1.0]
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn reset(&mut self) -> Vec<f64> {
        self.pos = [0.0, 0.0];
        self.vel = [0.0, 0.0];
        self.step_count = 0;
        self.state()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let a = clip_action(action, &self.action_scale());
        for i in 0..2 {
            self.vel[i] = (self.vel[i] + ACCEL_GAIN * a[i]).clamp(-VEL_LIMIT, VEL_LIMIT);
        }
        let dx = POS_GAIN * self.vel[0];
        self.pos[0] += dx;
        self.pos[1] += POS_GAIN * self.vel[1];
        self.step_count += 1;
        StepResult {
            next_state: self.state(),
            // The wrapper overwrites this channel; unwrapped, threshold
            // crossings of raw x-progress are counted per unit.
            reward_sparse: 0.0,
            reward_dense: dx,
            done: self.step_count >= HORIZON,
        }
    }

    fn progress(&self) -> Option<f64> {
        Some(self.pos[0])
    }
}
