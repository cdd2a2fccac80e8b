//! The bi-level imitation engine: meta-learned objective, actor update
//! through it, meta-loss, and the mixed-second-order update of the
//! objective network, plus the warm-start controller.

use crate::algo::{Algorithm, AlgoError};
use crate::data::TransitionBatch;
use crate::nets::GildNet;
use crate::numerics::{
    grad_of_grad_expression, grad_with_value, NumericsError, ParamVector, Tape, Tensor, Var,
};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetaLossVariant {
    /// `mean tanh(Qc(s, phi_new(s)) - Qc(s, phi_hat(s)))`.
    DifferenceTanh,
    /// `mean Qc(s, phi_new(s))`: optimize the updated policy's value
    /// with no comparison arm.
    Intuitive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetaSign {
    /// Ascend the superiority measure (default).
    MaximizeSuperiority,
    /// The published update's literal plus sign, which descends it.
    LiteralEq10,
}

/// State of the meta-learned imitation objective.
pub struct GildState {
    pub net: GildNet,
    pub meta_lr_outer: f64,
    pub inner_lr: f64,
    pub meta_loss_variant: MetaLossVariant,
    pub meta_sign: MetaSign,
    pub warm_start_fraction: f64,
}

impl GildState {
    pub fn new(net: GildNet, inner_lr: f64) -> Self {
        GildState {
            net,
            meta_lr_outer: inner_lr,
            inner_lr,
            meta_loss_variant: MetaLossVariant::DifferenceTanh,
            meta_sign: MetaSign::MaximizeSuperiority,
            warm_start_fraction: 0.01,
        }
    }

    pub fn omega(&self) -> &ParamVector {
        &self.net.params
    }
}

/// `use_gild` iff the step sits inside the warm-start window; fraction
/// 1.0 keeps the bi-level machinery on for the whole run. After the
/// gate closes, pseudo-updates and meta steps are skipped entirely.
pub fn warmstart_gate(step: u64, total_steps: u64, warm_start_fraction: f64) -> bool {
    (step as f64) < warm_start_fraction * total_steps as f64
}

/// Everything the meta step needs to rebuild the inner objective at
/// the pre-update actor: parameters, the exact demo batch, and the
/// reparameterization noise that produced the policy actions.
pub struct RetainedPath {
    pub phi_old: ParamVector,
    pub demo_states: Tensor,
    pub demo_actions: Tensor,
    pub gild_noise: Option<Tensor>,
}

/// Batch mean of the learned per-sample objective.
fn gild_objective(
    algo: &dyn Algorithm,
    net: &GildNet,
    tape: &mut Tape,
    phi_vars: &[Var],
    omega_vars: &[Var],
    demo_states: &Tensor,
    demo_actions: &Tensor,
    noise: Option<&Tensor>,
) -> Result<Var, NumericsError> {
    let s = tape.constant(demo_states);
    let a_d = tape.constant(demo_actions);
    let a_pi = algo
        .policy_action_vars(tape, phi_vars, s, noise)
        .map_err(flatten)?;
    let per_sample = net.forward(tape, omega_vars, s, a_d, a_pi)?;
    tape.mean(per_sample)
}

/// Actor step through both objectives: the critic's and the learned
/// one. The RL gradient enters as a constant (no dependence on the
/// objective network), while the learned term's dependence is kept
/// reproducible through the returned path. The live actor is replaced.
///
/// Returns the retained path plus the step's (rl_loss, gild_loss).
pub fn gild_actor_update(
    algo: &mut dyn Algorithm,
    gild: &GildState,
    batch: &TransitionBatch,
    demo_states: &Tensor,
    demo_actions: &Tensor,
    actor_rng: &mut ChaCha8Rng,
    gild_rng: &mut ChaCha8Rng,
) -> Result<(RetainedPath, f64, f64), AlgoError> {
    let phi_old = algo.actor_params().clone();
    let m = batch.states.rows();

    // RL part, identical construction to the vanilla actor step.
    let rl_noise = algo.sample_reparam_noise(m, actor_rng);
    let (rl_loss, g_rl) = grad_with_value(&phi_old, |tape, vars| {
        algo.rl_actor_loss(tape, vars, &batch.states, rl_noise.as_ref())
            .map_err(flatten)
    })?;

    // Learned-objective part at fixed omega.
    let gild_noise = algo.sample_reparam_noise(demo_states.rows(), gild_rng);
    let (gild_loss, g_gild) = grad_with_value(&phi_old, |tape, vars| {
        let omega_vars = gild.net.params.const_vars(tape);
        gild_objective(
            algo,
            &gild.net,
            tape,
            vars,
            &omega_vars,
            demo_states,
            demo_actions,
            gild_noise.as_ref(),
        )
    })?;

    let lr = algo.config().lr;
    let mut phi_new = phi_old.clone();
    phi_new.axpy(-lr, &g_rl);
    phi_new.axpy(-lr, &g_gild);
    algo.set_actor_params(phi_new);

    Ok((
        RetainedPath {
            phi_old,
            demo_states: demo_states.clone(),
            demo_actions: demo_actions.clone(),
            gild_noise,
        },
        rl_loss,
        gild_loss,
    ))
}

/// Meta comparison on validation states: value plus its gradient at
/// the updated actor. Deterministic (exploit) actions stand in for
/// both policies so no sampling noise enters the comparison.
pub fn meta_loss(
    algo: &dyn Algorithm,
    variant: MetaLossVariant,
    phi_new: &ParamVector,
    phi_hat: &ParamVector,
    val_states: &Tensor,
) -> Result<(f64, ParamVector), AlgoError> {
    let out = grad_with_value(phi_new, |tape, new_vars| {
        let s = tape.constant(val_states);
        let a_new = algo.exploit_action_vars(tape, new_vars, s).map_err(flatten)?;
        let q_new = algo.meta_q_vars(tape, s, a_new).map_err(flatten)?;
        match variant {
            MetaLossVariant::DifferenceTanh => {
                let hat_vars = phi_hat.const_vars(tape);
                let a_hat = algo
                    .exploit_action_vars(tape, &hat_vars, s)
                    .map_err(flatten)?;
                let q_hat = algo.meta_q_vars(tape, s, a_hat).map_err(flatten)?;
                let diff = tape.sub(q_new, q_hat)?;
                let t = tape.tanh(diff)?;
                tape.mean(t)
            }
            MetaLossVariant::Intuitive => tape.mean(q_new),
        }
    })?;
    Ok(out)
}

/// Meta step on the objective network:
/// `omega <- omega + s * lr_outer * lr_inner * (v . d2 L / dphi domega)`
/// with the mixed term evaluated at the pre-update actor. `s` is +1 for
/// the literal published sign (descent on the meta quantity) and -1 for
/// ascent on superiority (default).
pub fn gild_meta_update(
    gild: &mut GildState,
    algo: &dyn Algorithm,
    meta_grad: &ParamVector,
    retained: &RetainedPath,
) -> Result<ParamVector, AlgoError> {
    let mixed = grad_of_grad_expression(
        meta_grad,
        |tape, phi_vars, omega_vars| {
            gild_objective(
                algo,
                &gild.net,
                tape,
                phi_vars,
                omega_vars,
                &retained.demo_states,
                &retained.demo_actions,
                retained.gild_noise.as_ref(),
            )
        },
        &retained.phi_old,
        gild.omega(),
    )?;
    let s = match gild.meta_sign {
        MetaSign::LiteralEq10 => 1.0,
        MetaSign::MaximizeSuperiority => -1.0,
    };
    gild.net
        .params
        .axpy(s * gild.meta_lr_outer * gild.inner_lr, &mixed);
    Ok(mixed)
}

fn flatten(e: AlgoError) -> NumericsError {
    match e {
        AlgoError::Numerics(n) => n,
        other => NumericsError::BadShape {
            op: "gild",
            detail: other.to_string(),
        },
    }
}
