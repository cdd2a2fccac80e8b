//! Off-policy actor-critic update rules. Each algorithm sits behind
//! the [`Algorithm`] trait, registered by name and selected at runtime
//! from config or CLI.

mod common;
mod ddpg;
mod sac;
mod td3;

pub use common::{actor_update_il, actor_update_vanilla, ilrl_weights, pseudo_update};
pub use ddpg::Ddpg;
pub use sac::Sac;
pub use td3::Td3;

use crate::data::{Checkpoint, TransitionBatch};
use crate::numerics::{NumericsError, ParamVector, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// Hyperparameters shared across the algorithm family. Defaults follow
/// the published table; desk-scale runs shrink `hidden_dims` and
/// `batch_size` through the run config.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    /// DDPG/TD3 exploration noise std, in units of the action scale.
    pub exploration_noise: f64,
    /// TD3 target policy smoothing noise std, in units of the action scale.
    pub policy_noise: f64,
    /// TD3 smoothing noise clip, in units of the action scale.
    pub noise_clip: f64,
    /// TD3 actor/target delay; SAC target-sync interval.
    pub policy_delay: u64,
    /// SAC fixed entropy temperature.
    pub entropy_temp: f64,
    /// RL weight numerator in the imitation-augmented update.
    pub beta: f64,
    pub w_il: f64,
    pub hidden_dims: Vec<usize>,
}

impl Default for AlgoConfig {
    fn default() -> Self {
        AlgoConfig {
            lr: 3e-4,
            gamma: 0.99,
            tau: 5e-3,
            batch_size: 256,
            exploration_noise: 0.2,
            policy_noise: 0.2,
            noise_clip: 0.5,
            policy_delay: 2,
            entropy_temp: 0.2,
            beta: 2.5,
            w_il: 1.0,
            hidden_dims: vec![256, 256],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Explore,
    Exploit,
}

#[derive(Debug)]
pub enum AlgoError {
    Numerics(NumericsError),
    UnknownAlgo(String),
    MissingNoise(&'static str),
}

impl fmt::Display for AlgoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgoError::Numerics(e) => write!(f, "{e}"),
            AlgoError::UnknownAlgo(name) => {
                write!(f, "unknown algorithm {name:?}; known: {:?}", registry())
            }
            AlgoError::MissingNoise(what) => {
                write!(f, "{what} requires a reparameterization noise tensor")
            }
        }
    }
}

impl std::error::Error for AlgoError {}

impl From<NumericsError> for AlgoError {
    fn from(e: NumericsError) -> Self {
        AlgoError::Numerics(e)
    }
}

/// Strategy interface for one off-policy actor-critic algorithm.
///
/// Loss builders take the actor parameter slots as tape variables, so
/// callers can differentiate through derived parameter expressions as
/// well as plain leaves. Reparameterization noise is always passed in
/// by the caller, which keeps stream discipline and replayability in
/// the training loop's hands.
pub trait Algorithm: Send {
    fn name(&self) -> &'static str;
    fn config(&self) -> &AlgoConfig;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_scale(&self) -> &[f64];

    fn select_action(
        &self,
        state: &[f64],
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<f64>, AlgoError>;

    /// One gradient-descent step on the mean-square Bellman error;
    /// bootstrap targets are constants. Returns the critic loss.
    fn critic_update(
        &mut self,
        batch: &TransitionBatch,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64, AlgoError>;

    fn actor_params(&self) -> &ParamVector;
    fn set_actor_params(&mut self, params: ParamVector);

    /// Standard-normal noise for reparameterized policies; `None` for
    /// deterministic actors (no stream draw happens).
    fn sample_reparam_noise(&self, n: usize, rng: &mut ChaCha8Rng) -> Option<Tensor>;

    /// RL objective for the actor as a scalar tape var.
    fn rl_actor_loss(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: &Tensor,
        noise: Option<&Tensor>,
    ) -> Result<Var, AlgoError>;

    /// Conventional imitation objective (behaviour cloning).
    fn il_loss(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        demo_states: &Tensor,
        demo_actions: &Tensor,
    ) -> Result<Var, AlgoError>;

    /// Policy actions at `states` as tape vars; reparameterized sample
    /// for the stochastic actor so gradients flow.
    fn policy_action_vars(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: Var,
        noise: Option<&Tensor>,
    ) -> Result<Var, AlgoError>;

    /// Deterministic (exploit) actions as tape vars.
    fn exploit_action_vars(
        &self,
        tape: &mut Tape,
        phi_vars: &[Var],
        states: Var,
    ) -> Result<Var, AlgoError>;

    /// The critic the meta comparison reads: the single critic, the
    /// first twin, or the twin minimum, per algorithm.
    fn meta_q_vars(&self, tape: &mut Tape, states: Var, actions: Var)
        -> Result<Var, AlgoError>;

    /// Batch mean of |Q| with the same critic choice as the actor loss.
    fn mean_abs_q(&self, batch: &TransitionBatch) -> Result<f64, AlgoError>;

    fn actor_step_due(&self, step: u64) -> bool;
    fn target_sync_due(&self, step: u64) -> bool;
    fn sync_targets(&mut self);

    fn make_checkpoint(
        &self,
        env_id: &str,
        step: u64,
        eval_return: f64,
        rng_note: String,
    ) -> Checkpoint;
}

/// Registered algorithm names.
pub fn registry() -> &'static [&'static str] {
    &["ddpg", "td3", "sac"]
}

/// Instantiate an algorithm by name. Network draws happen in a fixed
/// order (critics, then actor) so runs that later draw extra networks
/// from the same stream share identical actor/critic bits.
pub fn create(
    name: &str,
    state_dim: usize,
    action_dim: usize,
    action_scale: Vec<f64>,
    cfg: AlgoConfig,
    init_rng: &mut ChaCha8Rng,
) -> Result<Box<dyn Algorithm>, AlgoError> {
    match name {
        "ddpg" => Ok(Box::new(Ddpg::new(
            state_dim,
            action_dim,
            action_scale,
            cfg,
            init_rng,
        ))),
        "td3" => Ok(Box::new(Td3::new(
            state_dim,
            action_dim,
            action_scale,
            cfg,
            init_rng,
        ))),
        "sac" => Ok(Box::new(Sac::new(
            state_dim,
            action_dim,
            action_scale,
            cfg,
            init_rng,
        ))),
        other => Err(AlgoError::UnknownAlgo(other.to_string())),
    }
}

/// Clip tape values to per-dimension action bounds.
pub(crate) fn clip_action_vars(
    tape: &mut Tape,
    x: Var,
    scale: &[f64],
) -> Result<Var, NumericsError> {
    let rows = tape.shape(x)[0];
    let upper_row = tape.constant(&Tensor::vector(scale.to_vec()));
    let upper = tape.broadcast_row(upper_row, rows)?;
    let capped = tape.min(x, upper)?;
    // max(a, lower) = -min(-a, -lower) = -min(-a, upper)
    let neg = tape.neg(capped)?;
    let floored = tape.min(neg, upper)?;
    tape.neg(floored)
}

/// Clamp plain action values to per-dimension bounds.
pub(crate) fn clamp_action(a: &mut [f64], scale: &[f64]) {
    for (v, &s) in a.iter_mut().zip(scale) {
        *v = v.clamp(-s, s);
    }
}

/// Per-dimension exploration noise draw, std in action-scale units.
pub(crate) fn exploration_noise<R: Rng>(rng: &mut R, scale: &[f64], sigma: f64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    scale
        .iter()
        .map(|&s| {
            let z: f64 = StandardNormal.sample(rng);
            z * sigma * s
        })
        .collect()
}

#[cfg(test)]
mod tests;
