use super::common::{bootstrap_targets, critic_regression_step};
use super::{AlgoConfig, AlgoError, Algorithm, Mode};
use crate::data::{normal_tensor, Checkpoint, TransitionBatch};
use crate::nets::{soft_update, Critic, GaussianActor};
use crate::numerics::{ParamVector, Tape, Tensor, Var};
use rand_chacha::ChaCha8Rng;

/// Soft actor-critic with a fixed entropy temperature, twin critics,
/// per-step actor updates, and delayed target synchronization.
pub struct Sac {
    pub(crate) cfg: AlgoConfig,
    pub(crate) action_scale: Vec<f64>,
    pub(crate) actor: GaussianActor,
    pub(crate) critic1: Critic,
    pub(crate) critic1_target: ParamVector,
    pub(crate) critic2: Critic,
    pub(crate) critic2_target: ParamVector,
}

impl Sac {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        action_scale: Vec<f64>,
        cfg: AlgoConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let critic1 = Critic::new(state_dim, action_dim, &cfg.hidden_dims, rng);
        let critic2 = Critic::new(state_dim, action_dim, &cfg.hidden_dims, rng);
        let actor = GaussianActor::new(
            state_dim,
            action_dim,
            &cfg.hidden_dims,
            action_scale.clone(),
            rng,
        );
        Sac {
            critic1_target: critic1.params.clone(),
            critic2_target: critic2.params.clone(),
            cfg,
            action_scale,
            actor,
            critic1,
            critic2,
        }
    }

    /// Squashed sample and its log-prob for given actor params/noise.
    fn sample_with_log_prob(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: Var,
        noise: &Tensor,
    ) -> Result<(Var, Var), AlgoError> {
        let heads = self.actor.heads(tape, phi_vars, states)?;
        let u = self.actor.presquash_sample(tape, &heads, noise)?;
        let a = self.actor.squash(tape, u)?;
        let lp = self.actor.log_prob_of_presquash(tape, &heads, u)?;
        Ok((a, lp))
    }

    fn min_twin_q(
        &self,
        tape: &mut Tape,
        states: Var,
        actions: Var,
        use_targets: bool,
    ) -> Result<Var, AlgoError> {
        let (p1, p2) = if use_targets {
            (&self.critic1_target, &self.critic2_target)
        } else {
            (&self.critic1.params, &self.critic2.params)
        };
        let c1_vars = p1.const_vars(tape);
        let q1 = self.critic1.forward(tape, &c1_vars, states, actions)?;
        let c2_vars = p2.const_vars(tape);
        let q2 = self.critic2.forward(tape, &c2_vars, states, actions)?;
        Ok(tape.min(q1, q2)?)
    }
}

impl Algorithm for Sac {
    fn name(&self) -> &'static str {
        "sac"
    }

    fn config(&self) -> &AlgoConfig {
        &self.cfg
    }

    fn state_dim(&self) -> usize {
        self.actor.trunk.input_dim
    }

    fn action_dim(&self) -> usize {
        self.actor.action_dim
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
        match mode {
            Mode::Exploit => Ok(self.actor.act_mean(state)?),
            Mode::Explore => {
                let noise = normal_tensor(rng, vec![1, self.action_dim()]);
                let mut tape = Tape::new();
                let vars = self.actor.params.const_vars(&mut tape);
                let s = tape.constant(&Tensor::matrix(1, state.len(), state.to_vec())?);
                let heads = self.actor.heads(&mut tape, &vars, s)?;
                let u = self.actor.presquash_sample(&mut tape, &heads, &noise)?;
                let a = self.actor.squash(&mut tape, u)?;
                Ok(tape.data(a).to_vec())
            }
        }
    }

    fn critic_update(
        &mut self,
        batch: &TransitionBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, AlgoError> {
        let m = batch.next_states.rows();
        let noise = normal_tensor(rng, vec![m, self.action_dim()]);
        let tail = {
            let mut tape = Tape::new();
            let s_next = tape.constant(&batch.next_states);
            let a_vars = self.actor.params.const_vars(&mut tape);
            let (a_next, lp) = self.sample_with_log_prob(&mut tape, &a_vars, s_next, &noise)?;
            let qmin = self.min_twin_q(&mut tape, s_next, a_next, true)?;
            let ent = tape.scale(lp, self.cfg.entropy_temp)?;
            let tail = tape.sub(qmin, ent)?;
            tape.data(tail).to_vec()
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

    fn sample_reparam_noise(&self, n: usize, rng: &mut ChaCha8Rng) -> Option<Tensor> {
        Some(normal_tensor(rng, vec![n, self.action_dim()]))
    }

    fn rl_actor_loss(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: &Tensor,
        noise: Option<&Tensor>,
    ) -> Result<Var, AlgoError> {
        let noise = noise.ok_or(AlgoError::MissingNoise("sac rl_actor_loss"))?;
        let s = tape.constant(states);
        let (a, lp) = self.sample_with_log_prob(tape, phi_vars, s, noise)?;
        let qmin = self.min_twin_q(tape, s, a, false)?;
        let ent = tape.scale(lp, self.cfg.entropy_temp)?;
        let gap = tape.sub(ent, qmin)?;
        Ok(tape.mean(gap)?)
    }

    fn il_loss(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        demo_states: &Tensor,
        demo_actions: &Tensor,
    ) -> Result<Var, AlgoError> {
        // Negative log-likelihood of the demonstration actions under the
        // squashed Gaussian; inverse-tanh of a_d is guarded off +-1.
        let m = demo_actions.rows();
        let ad = demo_actions.cols();
        let mut u_data = Vec::with_capacity(m * ad);
        for i in 0..m {
            u_data.extend(self.actor.presquash_of_action(demo_actions.row(i)));
        }
        let u = tape.constant(&Tensor::from_vec(vec![m, ad], u_data)?);
        let s = tape.constant(demo_states);
        let heads = self.actor.heads(tape, phi_vars, s)?;
        let lp = self.actor.log_prob_of_presquash(tape, &heads, u)?;
        let mean_lp = tape.mean(lp)?;
        Ok(tape.neg(mean_lp)?)
    }

    fn policy_action_vars(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: Var,
        noise: Option<&Tensor>,
    ) -> Result<Var, AlgoError> {
        let noise = noise.ok_or(AlgoError::MissingNoise("sac policy_action_vars"))?;
        let heads = self.actor.heads(tape, phi_vars, states)?;
        let u = self.actor.presquash_sample(tape, &heads, noise)?;
        Ok(self.actor.squash(tape, u)?)
    }

    fn exploit_action_vars(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: Var,
    ) -> Result<Var, AlgoError> {
        let heads = self.actor.heads(tape, phi_vars, states)?;
        Ok(self.actor.squash(tape, heads.mean)?)
    }

    fn meta_q_vars(
        &self,
        tape: &mut Tape,
        states: Var,
        actions: Var,
    ) -> Result<Var, AlgoError> {
        self.min_twin_q(tape, states, actions, false)
    }

    fn mean_abs_q(&self, batch: &TransitionBatch) -> Result<f64, AlgoError> {
        let mut tape = Tape::new();
        let s = tape.constant(&batch.states);
        let a = tape.constant(&batch.actions);
        let qmin = self.min_twin_q(&mut tape, s, a, false)?;
        let absq = tape.abs(qmin)?;
        let m = tape.mean(absq)?;
        Ok(tape.scalar_value(m))
    }

    fn actor_step_due(&self, _step: u64) -> bool {
        true
    }

    fn target_sync_due(&self, step: u64) -> bool {
        step % self.cfg.policy_delay == 0
    }

    fn sync_targets(&mut self) {
        soft_update(&mut self.critic1_target, &self.critic1.params, self.cfg.tau)
            .expect("critic1 target shapes");
        soft_update(&mut self.critic2_target, &self.critic2.params, self.cfg.tau)
            .expect("critic2 target shapes");
    }

    fn make_checkpoint(
        &self,
        env_id: &str,
        step: u64,
        eval_return: f64,
        rng_note: String,
    ) -> Checkpoint {
        Checkpoint::from_gaussian(&self.actor, self.name(), env_id, step, eval_return, rng_note)
    }
}

impl Sac {
    pub fn actor(&self) -> &GaussianActor {
        &self.actor
    }
}
