use super::common::{bootstrap_targets, critic_regression_step};
use super::{clamp_action, exploration_noise, AlgoConfig, AlgoError, Algorithm, Mode};
use crate::data::{Checkpoint, TransitionBatch};
use crate::nets::{soft_update, Critic, DeterministicActor};
use crate::numerics::{ParamVector, Tape, Tensor, Var};
use rand_chacha::ChaCha8Rng;

/// Deterministic policy gradient with one critic and per-step target
/// updates.
pub struct Ddpg {
    pub(crate) cfg: AlgoConfig,
    pub(crate) action_scale: Vec<f64>,
    pub(crate) actor: DeterministicActor,
    pub(crate) actor_target: ParamVector,
    pub(crate) critic: Critic,
    pub(crate) critic_target: ParamVector,
}

impl Ddpg {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        action_scale: Vec<f64>,
        cfg: AlgoConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let critic = Critic::new(state_dim, action_dim, &cfg.hidden_dims, rng);
        let actor = DeterministicActor::new(
            state_dim,
            action_dim,
            &cfg.hidden_dims,
            action_scale.clone(),
            rng,
        );
        let critic_target = critic.params.clone();
        let actor_target = actor.params.clone();
        Ddpg {
            cfg,
            action_scale,
            actor,
            actor_target,
            critic,
            critic_target,
        }
    }
}

impl Algorithm for Ddpg {
    fn name(&self) -> &'static str {
        "ddpg"
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
        _rng: &mut ChaCha8Rng,
    ) -> Result<f64, AlgoError> {
        // Target tail Q'(s', phi'(s')) on a constants-only tape.
        let tail = {
            let mut tape = Tape::new();
            let s_next = tape.constant(&batch.next_states);
            let at_vars = self.actor_target.const_vars(&mut tape);
            let a_next = self.actor.forward(&mut tape, &at_vars, s_next)?;
            let ct_vars = self.critic_target.const_vars(&mut tape);
            let q = self.critic.forward(&mut tape, &ct_vars, s_next, a_next)?;
            tape.data(q).to_vec()
        };
        let targets = bootstrap_targets(&batch.rewards, &batch.dones, &tail, self.cfg.gamma);
        critic_regression_step(
            &mut [(&self.critic.spec, &mut self.critic.params)],
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
        let c_vars = self.critic.params.const_vars(tape);
        let q = self.critic.forward(tape, &c_vars, s, a)?;
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
        let c_vars = self.critic.params.const_vars(tape);
        Ok(self.critic.forward(tape, &c_vars, states, actions)?)
    }

    fn mean_abs_q(&self, batch: &TransitionBatch) -> Result<f64, AlgoError> {
        let mut tape = Tape::new();
        let s = tape.constant(&batch.states);
        let a = tape.constant(&batch.actions);
        let c_vars = self.critic.params.const_vars(&mut tape);
        let q = self.critic.forward(&mut tape, &c_vars, s, a)?;
        let absq = tape.abs(q)?;
        let m = tape.mean(absq)?;
        Ok(tape.scalar_value(m))
    }

    fn actor_step_due(&self, _step: u64) -> bool {
        true
    }

    fn target_sync_due(&self, _step: u64) -> bool {
        true
    }

    fn sync_targets(&mut self) {
        soft_update(&mut self.critic_target, &self.critic.params, self.cfg.tau)
            .expect("critic target shapes");
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

/// `mean over the batch of ||phi(s_d) - a_d||^2`.
pub(crate) fn deterministic_il_loss(
    tape: &mut Tape,
    actor: &DeterministicActor,
    phi_vars: &[Var],
    demo_states: &Tensor,
    demo_actions: &Tensor,
) -> Result<Var, AlgoError> {
    let s = tape.constant(demo_states);
    let a_pi = actor.forward(tape, phi_vars, s)?;
    let a_d = tape.constant(demo_actions);
    let d = tape.sub(a_pi, a_d)?;
    let sq = tape.square(d)?;
    let per_sample = tape.sum_cols(sq)?;
    Ok(tape.mean(per_sample)?)
}
