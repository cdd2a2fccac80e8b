//! Actor, critic, and imitation-objective network architectures,
//! initialization, and target-network maintenance.
//!
//! Parameters are plain [`ParamVector`]s; forward passes take the
//! parameter slots as tape variables so the same code serves both leaf
//! parameters and derived parameter expressions (the meta step forwards
//! through an updated actor whose weights are tape nodes).

use crate::numerics::{
    diag_gaussian_log_density, NumericsError, ParamVector, Tape, Tensor, Var,
};
use rand::Rng;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Numerical guard when inverting tanh on demonstration actions.
pub const ATANH_GUARD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Tanh,
    Softplus,
    Identity,
}

/// Fully connected architecture: ReLU hidden layers, one output layer.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        output_activation: OutputActivation,
    ) -> Self {
        assert!(input_dim >= 1 && output_dim >= 1 && !hidden_dims.is_empty());
        assert!(hidden_dims.iter().all(|&d| d >= 1));
        MlpSpec {
            input_dim,
            hidden_dims,
            output_dim,
            output_activation,
        }
    }

    /// Layer shapes as (fan_in, fan_out) pairs, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// Weights uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`, biases zero.
/// Pure function of the spec and the stream state.
pub fn init_network<R: Rng>(spec: &MlpSpec, rng: &mut R) -> ParamVector {
    let mut tensors = Vec::new();
    for (fan_in, fan_out) in spec.layer_dims() {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        tensors.push(Tensor::from_vec(vec![fan_in, fan_out], data).expect("layer shape"));
        tensors.push(Tensor::zeros(vec![fan_out]));
    }
    ParamVector::new(tensors)
}

/// Forward pass through the MLP; `vars` holds [W, b] per layer in order.
pub fn mlp_forward(
    tape: &mut Tape,
    spec: &MlpSpec,
    vars: &[Var],
    input: Var,
) -> Result<Var, NumericsError> {
    let n_layers = spec.layer_dims().len();
    debug_assert_eq!(vars.len(), 2 * n_layers);
    let mut h = input;
    for layer in 0..n_layers {
        h = tape.matmul(h, vars[2 * layer])?;
        h = tape.add_row(h, vars[2 * layer + 1])?;
        if layer + 1 < n_layers {
            h = tape.relu(h)?;
        }
    }
    match spec.output_activation {
        OutputActivation::Tanh => tape.tanh(h),
        OutputActivation::Softplus => tape.softplus(h),
        OutputActivation::Identity => Ok(h),
    }
}

/// Deterministic policy: tanh output scaled per action dimension.
#[derive(Clone, Debug)]
pub struct DeterministicActor {
    pub spec: MlpSpec,
    pub action_scale: Vec<f64>,
    pub params: ParamVector,
}

impl DeterministicActor {
    pub fn new<R: Rng>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        action_scale: Vec<f64>,
        rng: &mut R,
    ) -> Self {
        assert_eq!(action_scale.len(), action_dim);
        let spec = MlpSpec::new(state_dim, hidden.to_vec(), action_dim, OutputActivation::Tanh);
        let params = init_network(&spec, rng);
        DeterministicActor {
            spec,
            action_scale,
            params,
        }
    }

    /// Actions for a batch of states, `[m, action_dim]`, in bounds.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        states: Var,
    ) -> Result<Var, NumericsError> {
        let raw = mlp_forward(tape, &self.spec, vars, states)?;
        scale_rows(tape, raw, &self.action_scale)
    }

    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let mut tape = Tape::new();
        let vars = self.params.const_vars(&mut tape);
        let s = tape.constant(&Tensor::matrix(1, state.len(), state.to_vec())?);
        let a = self.forward(&mut tape, &vars, s)?;
        Ok(tape.data(a).to_vec())
    }
}

fn scale_rows(tape: &mut Tape, x: Var, scale: &[f64]) -> Result<Var, NumericsError> {
    if scale.iter().all(|&s| s == 1.0) {
        return Ok(x);
    }
    let rows = tape.shape(x)[0];
    let sv = tape.constant(&Tensor::vector(scale.to_vec()));
    let sm = tape.broadcast_row(sv, rows)?;
    tape.mul(x, sm)
}

/// Squashed diagonal-Gaussian policy: shared trunk, mean and log-std
/// heads, log-std clamped to `[-20, 2]`, tanh squash scaled to bounds.
#[derive(Clone, Debug)]
pub struct GaussianActor {
    pub trunk: MlpSpec,
    pub action_dim: usize,
    pub action_scale: Vec<f64>,
    /// Trunk layers, then mean head [W, b], then log-std head [W, b].
    pub params: ParamVector,
}

/// Policy outputs prior to squashing.
pub struct GaussianHeads {
    pub mean: Var,
    pub log_std: Var,
}

impl GaussianActor {
    pub fn new<R: Rng>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        action_scale: Vec<f64>,
        rng: &mut R,
    ) -> Self {
        assert_eq!(action_scale.len(), action_dim);
        assert!(hidden.len() >= 2, "trunk needs at least one hidden layer");
        // Trunk: all but the last hidden dim feed the final hidden layer,
        // whose activations the two heads read.
        let trunk = MlpSpec::new(
            state_dim,
            hidden[..hidden.len() - 1].to_vec(),
            hidden[hidden.len() - 1],
            OutputActivation::Identity,
        );
        let params = init_network(&trunk, rng);
        let last_hidden = hidden[hidden.len() - 1];
        // Two heads drawn with the same fan-in rule as the trunk layers.
        let mut tensors: Vec<Tensor> = params.tensors().to_vec();
        for _ in 0..2 {
            let bound = 1.0 / (last_hidden as f64).sqrt();
            let data: Vec<f64> = (0..last_hidden * action_dim)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            tensors.push(Tensor::from_vec(vec![last_hidden, action_dim], data).expect("head"));
            tensors.push(Tensor::zeros(vec![action_dim]));
        }
        let params = ParamVector::new(tensors);
        GaussianActor {
            trunk,
            action_dim,
            action_scale,
            params,
        }
    }

    fn trunk_var_count(&self) -> usize {
        2 * self.trunk.layer_dims().len()
    }

    /// Mean and clamped log-std heads; trunk output passes through ReLU
    /// before the heads.
    pub fn heads(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        states: Var,
    ) -> Result<GaussianHeads, NumericsError> {
        let nt = self.trunk_var_count();
        let h = mlp_forward(tape, &self.trunk, &vars[..nt], states)?;
        let h = tape.relu(h)?;
        let mean = tape.matmul(h, vars[nt])?;
        let mean = tape.add_row(mean, vars[nt + 1])?;
        let ls = tape.matmul(h, vars[nt + 2])?;
        let ls = tape.add_row(ls, vars[nt + 3])?;
        let log_std = tape.clip(ls, LOG_STD_MIN, LOG_STD_MAX)?;
        Ok(GaussianHeads { mean, log_std })
    }

    /// Reparameterized pre-squash sample `u = mean + exp(log_std) * noise`.
    pub fn presquash_sample(
        &self,
        tape: &mut Tape,
        heads: &GaussianHeads,
        noise: &Tensor,
    ) -> Result<Var, NumericsError> {
        let eps = tape.constant(noise);
        let std = tape.exp(heads.log_std)?;
        let scaled = tape.mul(std, eps)?;
        tape.add(heads.mean, scaled)
    }

    /// Squash and scale a pre-squash value into an in-bounds action.
    pub fn squash(&self, tape: &mut Tape, u: Var) -> Result<Var, NumericsError> {
        let t = tape.tanh(u)?;
        scale_rows(tape, t, &self.action_scale)
    }

    /// Log-probability of the action `tanh(u) * scale` under the policy,
    /// including the tanh change-of-variables correction, `[m,1]`.
    pub fn log_prob_of_presquash(
        &self,
        tape: &mut Tape,
        heads: &GaussianHeads,
        u: Var,
    ) -> Result<Var, NumericsError> {
        let base = diag_gaussian_log_density(tape, u, heads.mean, heads.log_std)?;
        let corr = tanh_log_det_jacobian(tape, u)?;
        let corr_sum = tape.sum_cols(corr)?;
        let lp = tape.sub(base, corr_sum)?;
        let scale_term: f64 = self.action_scale.iter().map(|s| s.ln()).sum();
        tape.add_scalar(lp, -scale_term)
    }

    /// Exploit action: squashed mean.
    pub fn act_mean(&self, state: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let mut tape = Tape::new();
        let vars = self.params.const_vars(&mut tape);
        let s = tape.constant(&Tensor::matrix(1, state.len(), state.to_vec())?);
        let heads = self.heads(&mut tape, &vars, s)?;
        let a = self.squash(&mut tape, heads.mean)?;
        Ok(tape.data(a).to_vec())
    }

    /// Mean and std of the pre-squash Gaussian at one state.
    pub fn distribution_at(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NumericsError> {
        let mut tape = Tape::new();
        let vars = self.params.const_vars(&mut tape);
        let s = tape.constant(&Tensor::matrix(1, state.len(), state.to_vec())?);
        let heads = self.heads(&mut tape, &vars, s)?;
        let mean = tape.data(heads.mean).to_vec();
        let std = tape.data(heads.log_std).iter().map(|v| v.exp()).collect();
        Ok((mean, std))
    }

    /// Invert the squash on a demonstration action, guarded away from
    /// the tanh asymptotes. Out-of-bounds actions are clamped.
    pub fn presquash_of_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(&self.action_scale)
            .map(|(&a, &s)| {
                let t = (a / s).clamp(-1.0 + ATANH_GUARD, 1.0 - ATANH_GUARD);
                t.atanh()
            })
            .collect()
    }
}

/// `log(1 - tanh(u)^2)` elementwise in the stable form
/// `2 (ln 2 - u - softplus(-2u))`.
pub fn tanh_log_det_jacobian(tape: &mut Tape, u: Var) -> Result<Var, NumericsError> {
    let m2u = tape.scale(u, -2.0)?;
    let sp = tape.softplus(m2u)?;
    let inner = tape.add(u, sp)?;
    let neg = tape.neg(inner)?;
    let shifted = tape.add_scalar(neg, std::f64::consts::LN_2)?;
    tape.scale(shifted, 2.0)
}

/// Q network over concatenated (state, action), scalar output `[m,1]`.
#[derive(Clone, Debug)]
pub struct Critic {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl Critic {
    pub fn new<R: Rng>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let spec = MlpSpec::new(
            state_dim + action_dim,
            hidden.to_vec(),
            1,
            OutputActivation::Identity,
        );
        let params = init_network(&spec, rng);
        Critic { spec, params }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        states: Var,
        actions: Var,
    ) -> Result<Var, NumericsError> {
        let sa = tape.concat_cols(states, actions)?;
        mlp_forward(tape, &self.spec, vars, sa)
    }
}

/// The meta-learned imitation objective network: input
/// `[s_d || a_d || a_pi]`, softplus output, per-sample value >= 0.
#[derive(Clone, Debug)]
pub struct GildNet {
    pub spec: MlpSpec,
    pub state_dim: usize,
    pub action_dim: usize,
    pub params: ParamVector,
}

impl GildNet {
    pub fn new<R: Rng>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let spec = MlpSpec::new(
            state_dim + 2 * action_dim,
            hidden.to_vec(),
            1,
            OutputActivation::Softplus,
        );
        let params = init_network(&spec, rng);
        GildNet {
            spec,
            state_dim,
            action_dim,
            params,
        }
    }

    /// Per-sample nonnegative objective values, `[m,1]`. Input order is
    /// the fixed concatenation `[s_d || a_d || a_pi]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        demo_states: Var,
        demo_actions: Var,
        policy_actions: Var,
    ) -> Result<Var, NumericsError> {
        let sa = tape.concat_cols(demo_states, demo_actions)?;
        let z = tape.concat_cols(sa, policy_actions)?;
        mlp_forward(tape, &self.spec, vars, z)
    }

    /// Zero the first-layer weight rows that read the `a_pi` block, so
    /// the output is constant in the policy action and the objective's
    /// policy gradient is exactly zero.
    pub fn zero_policy_action_weights(&mut self) {
        let rows_from = self.state_dim + self.action_dim;
        let rows_to = self.state_dim + 2 * self.action_dim;
        let w1 = &mut self.params.tensors_mut()[0];
        let cols = w1.shape()[1];
        for r in rows_from..rows_to {
            for c in 0..cols {
                w1.data_mut()[r * cols + c] = 0.0;
            }
        }
    }
}

/// `target <- tau * online + (1 - tau) * target`, elementwise, exact.
pub fn soft_update(
    target: &mut ParamVector,
    online: &ParamVector,
    tau: f64,
) -> Result<(), NumericsError> {
    if !target.same_shapes(online) {
        return Err(NumericsError::BadShape {
            op: "soft_update",
            detail: format!(
                "target has {} values, online has {}",
                target.total_len(),
                online.total_len()
            ),
        });
    }
    for (t, o) in target.tensors_mut().iter_mut().zip(online.tensors()) {
        for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = tau * ov + (1.0 - tau) * *tv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn init_respects_fan_in_bound_and_zero_biases() {
        let spec = MlpSpec::new(256, vec![256], 4, OutputActivation::Tanh);
        let mut rng = StdRng::seed_from_u64(1);
        let params = init_network(&spec, &mut rng);
        for w in params.tensors()[0].data() {
            assert!(w.abs() <= 0.0625);
        }
        assert!(params.tensors()[1].data().iter().all(|&b| b == 0.0));
        assert!(params.tensors()[3].data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn init_is_pure_in_the_stream() {
        let spec = MlpSpec::new(5, vec![8, 8], 3, OutputActivation::Identity);
        let a = init_network(&spec, &mut StdRng::seed_from_u64(99));
        let b = init_network(&spec, &mut StdRng::seed_from_u64(99));
        assert_eq!(a, b);
    }

    #[test]
    fn soft_update_examples() {
        let online = ParamVector::new(vec![Tensor::scalar(0.0)]);
        let mut target = ParamVector::new(vec![Tensor::scalar(1.0)]);
        soft_update(&mut target, &online, 0.005).unwrap();
        assert_eq!(target.tensors()[0].item(), 0.995);
        soft_update(&mut target, &online, 0.005).unwrap();
        assert!((target.tensors()[0].item() - 0.990025).abs() < 1e-15);

        let mut t2 = ParamVector::new(vec![Tensor::scalar(-3.0)]);
        let o2 = ParamVector::new(vec![Tensor::scalar(7.0)]);
        soft_update(&mut t2, &o2, 1.0).unwrap();
        assert_eq!(t2.tensors()[0].item(), 7.0);
    }

    #[test]
    fn soft_update_shape_mismatch_errors() {
        let mut target = ParamVector::new(vec![Tensor::vector(vec![1.0, 2.0])]);
        let online = ParamVector::new(vec![Tensor::vector(vec![1.0, 2.0, 3.0])]);
        assert!(soft_update(&mut target, &online, 0.5).is_err());
    }

    #[test]
    fn gild_forward_with_zero_params_is_softplus_zero() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut net = GildNet::new(2, 2, &[8, 8], &mut rng);
        for t in net.params.tensors_mut() {
            for v in t.data_mut() {
                *v = 0.0;
            }
        }
        let mut tape = Tape::new();
        let vars = net.params.const_vars(&mut tape);
        let s = tape.constant(&Tensor::matrix(3, 2, vec![0.5; 6]).unwrap());
        let ad = tape.constant(&Tensor::matrix(3, 2, vec![-0.1; 6]).unwrap());
        let ap = tape.constant(&Tensor::matrix(3, 2, vec![0.3; 6]).unwrap());
        let out = net.forward(&mut tape, &vars, s, ad, ap).unwrap();
        for v in tape.data(out) {
            assert!((v - 0.6931471805599453).abs() < 1e-15);
        }
    }

    #[test]
    fn gild_forward_identical_rows_give_identical_outputs() {
        let mut rng = StdRng::seed_from_u64(5);
        let net = GildNet::new(3, 2, &[8, 8], &mut rng);
        let mut tape = Tape::new();
        let vars = net.params.const_vars(&mut tape);
        let row_s = vec![0.2, -0.4, 0.9];
        let row_a = vec![0.05, -0.02];
        let row_p = vec![-0.07, 0.01];
        let n = 4;
        let s = tape
            .constant(&Tensor::from_rows(&vec![row_s.clone(); n]).unwrap());
        let ad = tape
            .constant(&Tensor::from_rows(&vec![row_a.clone(); n]).unwrap());
        let ap = tape
            .constant(&Tensor::from_rows(&vec![row_p.clone(); n]).unwrap());
        let out = net.forward(&mut tape, &vars, s, ad, ap).unwrap();
        let data = tape.data(out);
        for v in data {
            assert_eq!(*v, data[0]);
        }
    }

    #[test]
    fn gild_forward_matches_straight_line_evaluation() {
        // Independent oracle: evaluate the 3-layer MLP with plain loops.
        let mut rng = StdRng::seed_from_u64(8);
        let net = GildNet::new(2, 1, &[4, 4], &mut rng);
        let (s, ad, ap) = (vec![0.3, -0.6], vec![0.08], vec![-0.03]);
        let mut x: Vec<f64> = s.iter().chain(&ad).chain(&ap).copied().collect();
        let ts = net.params.tensors();
        for layer in 0..3 {
            let w = &ts[2 * layer];
            let b = &ts[2 * layer + 1];
            let (fi, fo) = (w.shape()[0], w.shape()[1]);
            let mut y = vec![0.0; fo];
            for o in 0..fo {
                let mut acc = b.data()[o];
                for i in 0..fi {
                    acc += x[i] * w.data()[i * fo + o];
                }
                y[o] = acc;
            }
            if layer < 2 {
                for v in &mut y {
                    *v = v.max(0.0);
                }
            } else {
                for v in &mut y {
                    *v = v.max(0.0) + (-v.abs()).exp().ln_1p();
                }
            }
            x = y;
        }
        let mut tape = Tape::new();
        let vars = net.params.const_vars(&mut tape);
        let sv = tape.constant(&Tensor::matrix(1, 2, s).unwrap());
        let av = tape.constant(&Tensor::matrix(1, 1, ad).unwrap());
        let pv = tape.constant(&Tensor::matrix(1, 1, ap).unwrap());
        let out = net.forward(&mut tape, &vars, sv, av, pv).unwrap();
        assert!((tape.data(out)[0] - x[0]).abs() < 1e-12);
    }

    #[test]
    fn zeroed_policy_rows_make_output_constant_in_a_pi() {
        let mut rng = StdRng::seed_from_u64(13);
        let mut net = GildNet::new(2, 2, &[6, 6], &mut rng);
        net.zero_policy_action_weights();
        let eval = |ap_row: Vec<f64>| -> f64 {
            let mut tape = Tape::new();
            let vars = net.params.const_vars(&mut tape);
            let s = tape.constant(&Tensor::matrix(1, 2, vec![0.4, -0.2]).unwrap());
            let ad = tape.constant(&Tensor::matrix(1, 2, vec![0.1, 0.0]).unwrap());
            let ap = tape.constant(&Tensor::matrix(1, 2, ap_row).unwrap());
            let out = net.forward(&mut tape, &vars, s, ad, ap).unwrap();
            tape.data(out)[0]
        };
        assert_eq!(eval(vec![0.9, -0.9]), eval(vec![-0.3, 0.7]));
    }

    #[test]
    fn gaussian_density_integrates_to_one_on_grid() {
        // 1-D pre-squash density, trapezoid over [-40, 40].
        let mut rng = StdRng::seed_from_u64(17);
        let actor = GaussianActor::new(3, 1, &[8, 8], vec![1.0], &mut rng);
        let state = vec![0.3, -0.5, 0.2];
        let (mean, std) = actor.distribution_at(&state).unwrap();
        let (mu, sigma) = (mean[0], std[0]);
        let lo = mu - 12.0 * sigma;
        let hi = mu + 12.0 * sigma;
        let n = 20001;
        let dx = (hi - lo) / (n - 1) as f64;
        let mut integral = 0.0;
        for i in 0..n {
            let x = lo + i as f64 * dx;
            let p = (-0.5 * ((x - mu) / sigma).powi(2)).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            integral += w * p * dx;
        }
        assert!((integral - 1.0).abs() < 1e-4, "integral {integral}");
    }

    #[test]
    fn squashed_log_prob_subtracts_jacobian_term() {
        let mut rng = StdRng::seed_from_u64(19);
        let actor = GaussianActor::new(2, 2, &[6, 6], vec![1.0, 1.0], &mut rng);
        let states = Tensor::matrix(1, 2, vec![0.1, -0.7]).unwrap();
        let u_val = Tensor::matrix(1, 2, vec![0.4, -1.1]).unwrap();

        let mut tape = Tape::new();
        let vars = actor.params.const_vars(&mut tape);
        let s = tape.constant(&states);
        let heads = actor.heads(&mut tape, &vars, s).unwrap();
        let u = tape.constant(&u_val);
        let lp = actor.log_prob_of_presquash(&mut tape, &heads, u).unwrap();
        let base = diag_gaussian_log_density(&mut tape, u, heads.mean, heads.log_std).unwrap();
        let expected_corr: f64 = u_val
            .data()
            .iter()
            .map(|&uv: &f64| (1.0 - uv.tanh().powi(2)).ln())
            .sum();
        let diff = tape.data(base)[0] - tape.data(lp)[0];
        assert!((diff - expected_corr).abs() < 1e-12);
    }

    #[test]
    fn squash_correction_matches_numeric_change_of_variables() {
        // 1-D: density of a = tanh(u) equals N(u) / (1 - tanh(u)^2);
        // compare the log-prob against a finite-difference CDF ratio.
        let mut rng = StdRng::seed_from_u64(23);
        let actor = GaussianActor::new(1, 1, &[6, 6], vec![1.0], &mut rng);
        let state = vec![0.25];
        let (mean, std) = actor.distribution_at(&state).unwrap();
        let (mu, sigma) = (mean[0], std[0]);
        let u0: f64 = 0.6;
        let a0 = u0.tanh();

        // log p_A(a0) via the actor's graph.
        let mut tape = Tape::new();
        let vars = actor.params.const_vars(&mut tape);
        let s = tape.constant(&Tensor::matrix(1, 1, state.clone()).unwrap());
        let heads = actor.heads(&mut tape, &vars, s).unwrap();
        let u = tape.constant(&Tensor::matrix(1, 1, vec![u0]).unwrap());
        let lp = actor.log_prob_of_presquash(&mut tape, &heads, u).unwrap();

        // Numeric density of A at a0: P(a0-h < A <= a0+h) / 2h with A = tanh(U).
        let h = 1e-6;
        let cdf_u = |x: f64| 0.5 * (1.0 + erf_approx((x - mu) / (sigma * 2f64.sqrt())));
        let p = (cdf_u(((a0 + h) as f64).atanh()) - cdf_u(((a0 - h) as f64).atanh())) / (2.0 * h);
        assert!(
            (tape.data(lp)[0] - p.ln()).abs() < 1e-4,
            "graph {} vs numeric {}",
            tape.data(lp)[0],
            p.ln()
        );
    }

    fn erf_approx(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26, enough for a 1e-4 comparison.
        let sign = if x < 0.0 { -1.0 } else { 1.0 };
        let x = x.abs();
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let y = 1.0
            - (((((1.061405429 * t - 1.453152027) * t) + 1.421413741) * t - 0.284496736) * t
                + 0.254829592)
                * t
                * (-x * x).exp();
        sign * y
    }

    proptest! {
        #[test]
        fn deterministic_actor_outputs_stay_in_bounds(
            seed in 0u64..1000,
            sx in -10.0f64..10.0,
            sy in -10.0f64..10.0,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let actor = DeterministicActor::new(2, 2, &[8, 8], vec![0.1, 0.1], &mut rng);
            let a = actor.act(&[sx, sy]).unwrap();
            prop_assert!(a[0].abs() <= 0.1 && a[1].abs() <= 0.1);
        }

        #[test]
        fn gild_net_output_nonnegative(
            seed in 0u64..1000,
            v in -5.0f64..5.0,
        ) {
            let mut rng = StdRng::seed_from_u64(seed);
            let net = GildNet::new(2, 2, &[6, 6], &mut rng);
            let mut tape = Tape::new();
            let vars = net.params.const_vars(&mut tape);
            let s = tape.constant(&Tensor::matrix(1, 2, vec![v, -v]).unwrap());
            let ad = tape.constant(&Tensor::matrix(1, 2, vec![v * 0.5, v]).unwrap());
            let ap = tape.constant(&Tensor::matrix(1, 2, vec![-v, v * 0.2]).unwrap());
            let out = net.forward(&mut tape, &vars, s, ad, ap).unwrap();
            prop_assert!(tape.data(out)[0] >= 0.0);
        }
    }
}
