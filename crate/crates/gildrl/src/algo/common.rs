use super::{Algorithm, AlgoError};
use crate::data::TransitionBatch;
use crate::nets::{mlp_forward, MlpSpec};
use crate::numerics::{grad_with_value, ParamVector, Tape, Tensor};
use rand_chacha::ChaCha8Rng;

pub(crate) const W_RL_DENOMINATOR_FLOOR: f64 = 1e-8;

/// Imitation-augmented weights: `w_rl = beta / mean|Q|` (floored) and
/// the configured `w_il`.
pub fn ilrl_weights(algo: &dyn Algorithm, batch: &TransitionBatch) -> Result<(f64, f64), AlgoError> {
    let mean_abs = algo.mean_abs_q(batch)?;
    let w_rl = algo.config().beta / mean_abs.max(W_RL_DENOMINATOR_FLOOR);
    Ok((w_rl, algo.config().w_il))
}

/// Gradient (and value) of `w_rl * L_RL + w_il * L_IL` at the live
/// actor parameters. Shared by the imitation-variant actor step and
/// the pseudo-update.
fn ilrl_grad(
    algo: &dyn Algorithm,
    batch: &TransitionBatch,
    demo_states: &Tensor,
    demo_actions: &Tensor,
    noise: Option<&Tensor>,
) -> Result<(f64, ParamVector), AlgoError> {
    let (w_rl, w_il) = ilrl_weights(algo, batch)?;
    let out = grad_with_value(algo.actor_params(), |tape, vars| {
        let rl = algo
            .rl_actor_loss(tape, vars, &batch.states, noise)
            .map_err(flatten_numerics)?;
        let il = algo
            .il_loss(tape, vars, demo_states, demo_actions)
            .map_err(flatten_numerics)?;
        let rl_w = tape.scale(rl, w_rl)?;
        let il_w = tape.scale(il, w_il)?;
        tape.add(rl_w, il_w)
    })?;
    Ok(out)
}

/// One RL+IL gradient step on a copy of the actor. The live actor is
/// untouched; the returned parameters carry no dependence on anything
/// but the inputs.
pub fn pseudo_update(
    algo: &dyn Algorithm,
    batch: &TransitionBatch,
    demo_states: &Tensor,
    demo_actions: &Tensor,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamVector, f64), AlgoError> {
    let noise = algo.sample_reparam_noise(batch.states.rows(), rng);
    let (loss, g) = ilrl_grad(algo, batch, demo_states, demo_actions, noise.as_ref())?;
    let phi_hat = algo.actor_params().add_scaled(-algo.config().lr, &g);
    Ok((phi_hat, loss))
}

/// Vanilla actor step: `phi <- phi - lr * grad(rl_actor_loss)`.
pub fn actor_update_vanilla(
    algo: &mut dyn Algorithm,
    batch: &TransitionBatch,
    rng: &mut ChaCha8Rng,
) -> Result<f64, AlgoError> {
    let noise = algo.sample_reparam_noise(batch.states.rows(), rng);
    let (loss, g) = grad_with_value(algo.actor_params(), |tape, vars| {
        algo.rl_actor_loss(tape, vars, &batch.states, noise.as_ref())
            .map_err(flatten_numerics)
    })?;
    let updated = algo.actor_params().add_scaled(-algo.config().lr, &g);
    algo.set_actor_params(updated);
    Ok(loss)
}

/// Imitation-augmented actor step (the conventional RL+IL update).
pub fn actor_update_il(
    algo: &mut dyn Algorithm,
    batch: &TransitionBatch,
    demo_states: &Tensor,
    demo_actions: &Tensor,
    rng: &mut ChaCha8Rng,
) -> Result<f64, AlgoError> {
    let noise = algo.sample_reparam_noise(batch.states.rows(), rng);
    let (loss, g) = ilrl_grad(algo, batch, demo_states, demo_actions, noise.as_ref())?;
    let updated = algo.actor_params().add_scaled(-algo.config().lr, &g);
    algo.set_actor_params(updated);
    Ok(loss)
}

/// One gradient-descent step of every critic toward shared constant
/// targets. Returns the summed MSE loss.
pub(crate) fn critic_regression_step(
    critics: &mut [(&MlpSpec, &mut ParamVector)],
    states: &Tensor,
    actions: &Tensor,
    targets: &Tensor,
    lr: f64,
) -> Result<f64, AlgoError> {
    let mut tape = Tape::new();
    let s = tape.constant(states);
    let a = tape.constant(actions);
    let sa = tape.concat_cols(s, a)?;
    let y = tape.constant(targets);
    let mut vars_per_critic = Vec::with_capacity(critics.len());
    let mut total = None;
    for (spec, params) in critics.iter() {
        let vars = params.leaf_vars(&mut tape);
        let q = mlp_forward(&mut tape, spec, &vars, sa)?;
        let d = tape.sub(q, y)?;
        let sq = tape.square(d)?;
        let mse = tape.mean(sq)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, mse)?,
            None => mse,
        });
        vars_per_critic.push(vars);
    }
    let loss = total.expect("at least one critic");
    let grads = tape.backward(loss)?;
    for ((_, params), vars) in critics.iter_mut().zip(&vars_per_critic) {
        let mut update = params.zeros_like();
        for (t, v) in update.tensors_mut().iter_mut().zip(vars) {
            if let Some(g) = grads.get(*v) {
                t.data_mut().copy_from_slice(g);
            }
        }
        params.axpy(-lr, &update);
    }
    Ok(tape.scalar_value(loss))
}

/// `(1 - done) * gamma * tail + r`, computed on plain values.
pub(crate) fn bootstrap_targets(
    rewards: &Tensor,
    dones: &Tensor,
    tail: &[f64],
    gamma: f64,
) -> Tensor {
    let data: Vec<f64> = rewards
        .data()
        .iter()
        .zip(dones.data())
        .zip(tail)
        .map(|((&r, &d), &t)| r + gamma * (1.0 - d) * t)
        .collect();
    Tensor::from_vec(vec![rewards.rows(), 1], data).expect("targets")
}

pub(crate) fn flatten_numerics(e: AlgoError) -> crate::numerics::NumericsError {
    match e {
        AlgoError::Numerics(n) => n,
        other => crate::numerics::NumericsError::BadShape {
            op: "algorithm",
            detail: other.to_string(),
        },
    }
}
