use super::common::{bootstrap_targets, critic_regression_step};
use super::ddpg::deterministic_il_loss;
use super::{
    clamp_action, clip_action_vars, exploration_noise, AlgoConfig, AlgoError, Algorithm, Mode,
};
use crate::data::{Checkpoint, TransitionBatch};
use crate::nets::{soft_update, Critic, DeterministicActor};
use crate::numerics::{ParamVector, Tape, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Twin critics, clipped target-policy smoothing, and delayed actor
/// and target updates.
pub struct Td3 {
    pub(crate) cfg: AlgoConfig,
    pub(crate) action_scale: Vec<f64>,
    pub(crate) actor: DeterministicActor,
    pub(crate) actor_target: ParamVector,
    pub(crate) critic1: Critic,
    pub(crate) critic1_target: ParamVector,
    pub(crate) critic2: Critic,
    pub(crate) critic2_target: ParamVector,
}

impl Td3 {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        action_scale: Vec<f64>,
        cfg: AlgoConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let critic1 = Critic::new(state_dim, action_dim, &cfg.hidden_dims, rng);
        let critic2 = Critic::new(state_dim, action_dim, &cfg.hidden_dims, rng);
        let actor = DeterministicActor::new(
            state_dim,
            action_dim,
            &cfg.hidden_dims,
            action_scale.clone(),
            rng,
        );
        Td3 {
            critic1_target: critic1.params.clone(),
            critic2_target: critic2.params.clone(),
            actor_target: actor.params.clone(),
            cfg,
            action_scale,
            actor,
            critic1,
            critic2,
        }
    }

    /// Smoothing noise: per-dim N(0, sigma_pol * scale) clipped to
    /// +-(noise_clip * scale).
    pub(crate) fn target_noise(&self, n: usize, rng: &mut ChaCha8Rng) -> Tensor {
        let ad = self.action_scale.len();
        let mut data = Vec::with_capacity(n * ad);
        for _ in 0..n {
            for &s in &self.action_scale {
                let z: f64 = StandardNormal.sample(rng);
                let lim = self.cfg.noise_clip * s;
                data.push((z * self.cfg.policy_noise * s).clamp(-lim, lim));
            }
        }
        Tensor::from_vec(vec![n, ad], data).expect("noise shape")
    }
}

impl Algorithm for Td3 {
    fn name(&self) -> &'static str {
        "td3"
    }

    fn config(&self) -> &AlgoConfig {
        &self.cfg
    }

    fn state_dim(&self) -> usize {
        self.actor.spec.input_dim
    }

    fn action_dim(&self) -> usize {
        self.actor.spec.output_dim
    }

    fn action_scale(&self) -> &[f64] {
        &self.action_scale
    }

    fn select_action(
        &self,
        state: &[f64],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>, AlgoError> {
        let mut a = self.actor.act(state)?;
        if mode == Mode::Explore {
            let eps = exploration_noise(rng, &self.action_scale, self.cfg.exploration_noise);
            for (v, e) in a.iter_mut().zip(eps) {
                *v += e;
            }
            clamp_action(&mut a, &self.action_scale);
        }
        Ok(a)
    }

    fn critic_update(
        &mut self,
        batch: &TransitionBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, AlgoError> {
        let m = batch.next_states.rows();
        let noise = self.target_noise(m, rng);
        let tail = {
            let mut tape = Tape::new();
            let s_next = tape.constant(&batch.next_states);
            let at_vars = self.actor_target.const_vars(&mut tape);
            let a_raw = self.actor.forward(&mut tape, &at_vars, s_next)?;
            let eps = tape.constant(&noise);
            let a_noisy = tape.add(a_raw, eps)?;
            let a_next = clip_action_vars(&mut tape, a_noisy, &self.action_scale)?;
            let c1_vars = self.critic1_target.const_vars(&mut tape);
            let q1 = self.critic1.forward(&mut tape, &c1_vars, s_next, a_next)?;
            let c2_vars = self.critic2_target.const_vars(&mut tape);
            let q2 = self.critic2.forward(&mut tape, &c2_vars, s_next, a_next)?;
            let qmin = tape.min(q1, q2)?;
            tape.data(qmin).to_vec()
        };
        let targets = bootstrap_targets(&batch.rewards, &batch.dones, &tail, self.cfg.gamma);
        critic_regression_step(
            &mut [
                (&self.critic1.spec, &mut self.critic1.params),
                (&self.critic2.spec, &mut self.critic2.params),
            ],
            &batch.states,
            &batch.actions,
            &targets,
            self.cfg.lr,
        )
    }

    fn actor_params(&self) -> &ParamVector {
        &self.actor.params
    }

    fn set_actor_params(&mut self, params: ParamVector) {
        self.actor.params = params;
    }

    fn sample_reparam_noise(&self, _n: usize, _rng: &mut ChaCha8Rng) -> Option<Tensor> {
        None
    }

    fn rl_actor_loss(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: &Tensor,
        _noise: Option<&Tensor>,
    ) -> Result<Var, AlgoError> {
        let s = tape.constant(states);
        let a = self.actor.forward(tape, phi_vars, s)?;
        let c_vars = self.critic1.params.const_vars(tape);
        let q = self.critic1.forward(tape, &c_vars, s, a)?;
        let m = tape.mean(q)?;
        Ok(tape.neg(m)?)
    }

    fn il_loss(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        demo_states: &Tensor,
        demo_actions: &Tensor,
    ) -> Result<Var, AlgoError> {
        deterministic_il_loss(tape, &self.actor, phi_vars, demo_states, demo_actions)
    }

    fn policy_action_vars(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: Var,
        _noise: Option<&Tensor>,
    ) -> Result<Var, AlgoError> {
        Ok(self.actor.forward(tape, phi_vars, states)?)
    }

    fn exploit_action_vars(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: Var,
    ) -> Result<Var, AlgoError> {
        Ok(self.actor.forward(tape, phi_vars, states)?)
    }

    fn meta_q_vars(
        &self,
        tape: &mut Tape,
        states: Var,
        actions: Var,
    ) -> Result<Var, AlgoError> {
        let c_vars = self.critic1.params.const_vars(tape);
        Ok(self.critic1.forward(tape, &c_vars, states, actions)?)
    }

    fn mean_abs_q(&self, batch: &TransitionBatch) -> Result<f64, AlgoError> {
        let mut tape = Tape::new();
        let s = tape.constant(&batch.states);
        let a = tape.constant(&batch.actions);
        let c_vars = self.critic1.params.const_vars(&mut tape);
        let q = self.critic1.forward(&mut tape, &c_vars, s, a)?;
        let absq = tape.abs(q)?;
        let m = tape.mean(absq)?;
        Ok(tape.scalar_value(m))
    }

    fn actor_step_due(&self, step: u64) -> bool {
        step % self.cfg.policy_delay == 0
    }

    fn target_sync_due(&self, step: u64) -> bool {
        step % self.cfg.policy_delay == 0
    }

    fn sync_targets(&mut self) {
        soft_update(&mut self.critic1_target, &self.critic1.params, self.cfg.tau)
            .expect("critic1 target shapes");
        soft_update(&mut self.critic2_target, &self.critic2.params, self.cfg.tau)
            .expect("critic2 target shapes");
        soft_update(&mut self.actor_target, &self.actor.params, self.cfg.tau)
            .expect("actor target shapes");
    }

    fn make_checkpoint(
        &self,
        env_id: &str,
        step: u64,
        eval_return: f64,
        rng_note: String,
    ) -> Checkpoint {
        Checkpoint::from_deterministic(&self.actor, self.name(), env_id, step, eval_return, rng_note)
    }
}
