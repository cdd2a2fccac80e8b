use super::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const FD_H: f64 = 1e-5;

/// Central-difference gradient of a scalar function of `params`,
/// evaluated through forward passes only. Independent oracle for the
/// reverse sweep.
fn finite_diff_grad<F>(params: &ParamVector, f: F) -> ParamVector
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NumericsError>,
{
    let eval = |p: &ParamVector| -> f64 {
        let mut tape = Tape::new();
        let vars = p.leaf_vars(&mut tape);
        let out = f(&mut tape, &vars).expect("fd eval");
        tape.scalar_value(out)
    };
    let mut flat = params.flatten();
    let mut g = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + FD_H;
        let hi = eval(&params.unflatten_like(&flat).unwrap());
        flat[i] = orig - FD_H;
        let lo = eval(&params.unflatten_like(&flat).unwrap());
        flat[i] = orig;
        g[i] = (hi - lo) / (2.0 * FD_H);
    }
    params.unflatten_like(&g).unwrap()
}

fn assert_close_rel(got: &[f64], want: &[f64], rel: f64, floor: f64) {
    assert_eq!(got.len(), want.len());
    for (i, (&g, &w)) in got.iter().zip(want).enumerate() {
        let tol = (rel * w.abs()).max(floor);
        assert!(
            (g - w).abs() <= tol,
            "index {i}: got {g}, want {w} (tol {tol})"
        );
    }
}

fn random_tensor(rng: &mut StdRng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Two-layer MLP params: [W1, b1, W2, b2].
fn random_mlp_params(rng: &mut StdRng, inp: usize, hidden: usize, out: usize) -> ParamVector {
    ParamVector::new(vec![
        random_tensor(rng, vec![inp, hidden]),
        random_tensor(rng, vec![hidden]),
        random_tensor(rng, vec![hidden, out]),
        random_tensor(rng, vec![out]),
    ])
}

fn mlp_scalar_loss(
    tape: &mut Tape,
    vars: &[Var],
    input: &Tensor,
) -> Result<Var, NumericsError> {
    let x = tape.constant(input);
    let h = tape.matmul(x, vars[0])?;
    let h = tape.add_row(h, vars[1])?;
    let h = tape.relu(h)?;
    let y = tape.matmul(h, vars[2])?;
    let y = tape.add_row(y, vars[3])?;
    let y = tape.tanh(y)?;
    tape.mean(y)
}

#[test]
fn softplus_at_zero_is_ln_two() {
    let mut tape = Tape::new();
    let x = tape.constant_scalar(0.0);
    let y = tape.softplus(x).unwrap();
    assert_eq!(tape.scalar_value(y), 0.6931471805599453);
}

#[test]
fn tanh_at_zero_is_zero() {
    let mut tape = Tape::new();
    let x = tape.constant_scalar(0.0);
    let y = tape.tanh(x).unwrap();
    assert_eq!(tape.scalar_value(y), 0.0);
}

#[test]
fn tanh_saturates_without_nan() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::vector(vec![1e6, -1e6]));
    let y = tape.tanh(x).unwrap();
    assert_eq!(tape.data(y), &[1.0, -1.0]);
}

#[test]
fn softplus_is_overflow_safe() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::vector(vec![800.0, -800.0]));
    let y = tape.softplus(x).unwrap();
    assert_eq!(tape.data(y)[0], 800.0);
    assert_eq!(tape.data(y)[1], 0.0);
}

#[test]
fn clip_boundary_case() {
    let mut tape = Tape::new();
    let x = tape.constant_scalar(0.7);
    let y = tape.clip(x, -0.5, 0.5).unwrap();
    assert_eq!(tape.scalar_value(y), 0.5);
}

#[test]
fn grad_of_square_at_three() {
    let params = ParamVector::new(vec![Tensor::scalar(3.0)]);
    let g = grad(&params, |tape, vars| {
        let y = tape.square(vars[0])?;
        tape.sum(y)
    })
    .unwrap();
    assert_eq!(g.tensors()[0].item(), 6.0);
}

#[test]
fn grad_of_softplus_at_zero_is_half() {
    let params = ParamVector::new(vec![Tensor::scalar(0.0)]);
    let g = grad(&params, |tape, vars| {
        let y = tape.softplus(vars[0])?;
        tape.sum(y)
    })
    .unwrap();
    assert_eq!(g.tensors()[0].item(), 0.5);
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(7);
    for trial in 0..5 {
        let params = random_mlp_params(&mut rng, 3, 6, 2);
        let input = random_tensor(&mut rng, vec![4, 3]);
        let f = |tape: &mut Tape, vars: &[Var]| mlp_scalar_loss(tape, vars, &input);
        let analytic = grad(&params, f).unwrap();
        let fd = finite_diff_grad(&params, f);
        for (a, b) in analytic.tensors().iter().zip(fd.tensors()) {
            assert_close_rel(a.data(), b.data(), 1e-6, 1e-9);
        }
        let _ = trial;
    }
}

#[test]
fn gradient_of_sum_is_sum_of_gradients() {
    let mut rng = StdRng::seed_from_u64(11);
    let params = random_mlp_params(&mut rng, 3, 5, 1);
    let input = random_tensor(&mut rng, vec![4, 3]);
    let f = |tape: &mut Tape, vars: &[Var]| mlp_scalar_loss(tape, vars, &input);
    let g = |tape: &mut Tape, vars: &[Var]| -> Result<Var, NumericsError> {
        let x = tape.constant(&input);
        let h = tape.matmul(x, vars[0])?;
        let h = tape.add_row(h, vars[1])?;
        let h = tape.softplus(h)?;
        tape.mean(h)
    };
    let gf = grad(&params, f).unwrap();
    let gg = grad(&params, g).unwrap();
    let gsum = grad(&params, |tape, vars| {
        let a = f(tape, vars)?;
        let b = g(tape, vars)?;
        tape.add(a, b)
    })
    .unwrap();
    let combined = gf.add_scaled(1.0, &gg);
    for (a, b) in gsum.tensors().iter().zip(combined.tensors()) {
        assert_close_rel(a.data(), b.data(), 1e-12, 1e-14);
    }
}

#[test]
fn unused_parameter_gets_exact_zero() {
    let params = ParamVector::new(vec![Tensor::scalar(2.0), Tensor::vector(vec![1.0, 4.0])]);
    let g = grad(&params, |tape, vars| {
        let y = tape.square(vars[0])?;
        tape.sum(y)
    })
    .unwrap();
    assert_eq!(g.tensors()[1].data(), &[0.0, 0.0]);
}

#[test]
fn grad_rejects_non_scalar_output() {
    let params = ParamVector::new(vec![Tensor::vector(vec![1.0, 2.0])]);
    let err = grad(&params, |tape, vars| tape.square(vars[0])).unwrap_err();
    assert!(matches!(err, NumericsError::NotScalar { .. }));
}

#[test]
fn shape_mismatch_names_primitive_and_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(&Tensor::zeros(vec![2, 3]));
    let b = tape.constant(&Tensor::zeros(vec![2, 3]));
    match tape.matmul(a, b).unwrap_err() {
        NumericsError::ShapeMismatch { op, lhs, rhs } => {
            assert_eq!(op, "matmul");
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut tape = Tape::new();
    let x = tape.constant_scalar(1000.0);
    let err = tape.exp(x).unwrap_err();
    assert!(matches!(err, NumericsError::NonFinite { op: "exp", .. }));

    let neg = tape.constant_scalar(-1.0);
    let err = tape.log(neg).unwrap_err();
    assert!(matches!(err, NumericsError::NonFinite { op: "log", .. }));
}

#[test]
fn non_finite_gradient_names_offending_op() {
    // recip is finite at 1e-200 but its adjoint overflows.
    let params = ParamVector::new(vec![Tensor::scalar(1e-200)]);
    let err = grad(&params, |tape, vars| {
        let r = tape.recip(vars[0])?;
        tape.sum(r)
    })
    .unwrap_err();
    assert!(matches!(err, NumericsError::NonFinite { op: "recip", .. }));
}

#[test]
fn detach_blocks_gradient_flow() {
    // f(x) = detach(x^2) * x behaves like c * x with c = x^2.
    let params = ParamVector::new(vec![Tensor::scalar(3.0)]);
    let g = grad(&params, |tape, vars| {
        let sq = tape.square(vars[0])?;
        let c = tape.detach(sq);
        let y = tape.mul(c, vars[0])?;
        tape.sum(y)
    })
    .unwrap();
    assert_eq!(g.tensors()[0].item(), 9.0);
}

#[test]
fn min_gradient_follows_smaller_operand() {
    let params = ParamVector::new(vec![
        Tensor::vector(vec![1.0, 5.0]),
        Tensor::vector(vec![2.0, 4.0]),
    ]);
    let g = grad(&params, |tape, vars| {
        let m = tape.min(vars[0], vars[1])?;
        tape.sum(m)
    })
    .unwrap();
    assert_eq!(g.tensors()[0].data(), &[1.0, 0.0]);
    assert_eq!(g.tensors()[1].data(), &[0.0, 1.0]);
}

#[test]
fn replay_reproduces_recorded_values_bit_exactly() {
    let mut rng = StdRng::seed_from_u64(23);
    let params = random_mlp_params(&mut rng, 4, 8, 3);
    let input = random_tensor(&mut rng, vec![5, 4]);
    let mut tape = Tape::new();
    let vars = params.leaf_vars(&mut tape);
    let out = mlp_scalar_loss(&mut tape, &vars, &input).unwrap();
    // Extend the tape with a recorded gradient sweep, then a detach and
    // a few extra primitives so the replay covers adjoint nodes too.
    let adj = tape.backward_graph(out).unwrap();
    let gw1 = adj[vars[0].0].unwrap();
    let d = tape.detach(gw1);
    let s = tape.sum(d).unwrap();
    let _ = tape.abs(s).unwrap();
    let replayed = tape.replay();
    let recorded = tape.recorded_values();
    assert_eq!(replayed.len(), recorded.len());
    for (r, rec) in replayed.iter().zip(&recorded) {
        assert_eq!(r, rec, "replayed values must match bit-exactly");
    }
}

#[test]
fn mixed_partial_scalar_toy() {
    // L(phi, omega) = omega * phi^2 -> d/domega [v * dL/dphi] = v * 2 phi.
    let phi = ParamVector::new(vec![Tensor::scalar(1.7)]);
    let omega = ParamVector::new(vec![Tensor::scalar(-0.4)]);
    let v = ParamVector::new(vec![Tensor::scalar(2.5)]);
    let m = grad_of_grad_expression(
        &v,
        |tape, phi_vars, omega_vars| {
            let sq = tape.square(phi_vars[0])?;
            let prod = tape.mul(omega_vars[0], sq)?;
            tape.sum(prod)
        },
        &phi,
        &omega,
    )
    .unwrap();
    assert!((m.tensors()[0].item() - 2.5 * 2.0 * 1.7).abs() < 1e-12);
}

#[test]
fn mixed_partial_of_phi_independent_inner_is_zero() {
    let phi = ParamVector::new(vec![Tensor::vector(vec![1.0, 2.0])]);
    let omega = ParamVector::new(vec![Tensor::vector(vec![0.3, 0.4, 0.5])]);
    let v = ParamVector::new(vec![Tensor::vector(vec![1.0, 1.0])]);
    let m = grad_of_grad_expression(
        &v,
        |tape, _phi_vars, omega_vars| {
            let sq = tape.square(omega_vars[0])?;
            tape.sum(sq)
        },
        &phi,
        &omega,
    )
    .unwrap();
    assert_eq!(m.tensors()[0].data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn mixed_partial_rejects_outer_vec_mismatch() {
    let phi = ParamVector::new(vec![Tensor::vector(vec![1.0, 2.0])]);
    let omega = ParamVector::new(vec![Tensor::scalar(0.5)]);
    let bad_v = ParamVector::new(vec![Tensor::vector(vec![1.0, 1.0, 1.0])]);
    let err = grad_of_grad_expression(
        &bad_v,
        |tape, phi_vars, _| {
            let s = tape.square(phi_vars[0])?;
            tape.sum(s)
        },
        &phi,
        &omega,
    )
    .unwrap_err();
    assert!(matches!(err, NumericsError::BadShape { .. }));
}

/// A small network shaped like the meta-learned objective: the inner
/// scalar feeds phi-dependent activations through an omega-parameterized
/// head, so the mixed partial is dense.
fn gild_like_inner(
    tape: &mut Tape,
    phi_vars: &[Var],
    omega_vars: &[Var],
    states: &Tensor,
) -> Result<Var, NumericsError> {
    let x = tape.constant(states);
    // phi: single linear+tanh layer producing "actions"
    let a = tape.matmul(x, phi_vars[0])?;
    let a = tape.add_row(a, phi_vars[1])?;
    let a = tape.tanh(a)?;
    // omega head over [x || a]
    let z = tape.concat_cols(x, a)?;
    let h = tape.matmul(z, omega_vars[0])?;
    let h = tape.add_row(h, omega_vars[1])?;
    let h = tape.relu(h)?;
    let y = tape.matmul(h, omega_vars[2])?;
    let y = tape.add_row(y, omega_vars[3])?;
    let y = tape.softplus(y)?;
    tape.mean(y)
}

#[test]
fn mixed_partial_matches_finite_difference_of_gradient() {
    let mut rng = StdRng::seed_from_u64(41);
    for _ in 0..3 {
        let state_dim = 3;
        let act_dim = 2;
        let hidden = 5;
        let phi = ParamVector::new(vec![
            random_tensor(&mut rng, vec![state_dim, act_dim]),
            random_tensor(&mut rng, vec![act_dim]),
        ]);
        let omega = ParamVector::new(vec![
            random_tensor(&mut rng, vec![state_dim + act_dim, hidden]),
            random_tensor(&mut rng, vec![hidden]),
            random_tensor(&mut rng, vec![hidden, 1]),
            random_tensor(&mut rng, vec![1]),
        ]);
        let states = random_tensor(&mut rng, vec![4, state_dim]);
        let outer_flat: Vec<f64> = (0..phi.total_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let outer = phi.unflatten_like(&outer_flat).unwrap();

        let analytic = grad_of_grad_expression(
            &outer,
            |tape, pv, ov| gild_like_inner(tape, pv, ov, &states),
            &phi,
            &omega,
        )
        .unwrap();

        // Oracle: central difference of [outer . dL/dphi] under
        // one-coordinate omega perturbations.
        let dot_at = |om: &ParamVector| -> f64 {
            let g = grad(&phi, |tape, pv| {
                let ov = om.const_vars(tape);
                let ov_leaf: Vec<Var> = ov;
                gild_like_inner(tape, pv, &ov_leaf, &states)
            })
            .unwrap();
            g.flatten()
                .iter()
                .zip(&outer_flat)
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut flat = omega.flatten();
        let mut fd = vec![0.0; flat.len()];
        for j in 0..flat.len() {
            let orig = flat[j];
            flat[j] = orig + FD_H;
            let hi = dot_at(&omega.unflatten_like(&flat).unwrap());
            flat[j] = orig - FD_H;
            let lo = dot_at(&omega.unflatten_like(&flat).unwrap());
            flat[j] = orig;
            fd[j] = (hi - lo) / (2.0 * FD_H);
        }
        assert_close_rel(&analytic.flatten(), &fd, 1e-4, 1e-8);
    }
}

#[test]
fn diag_gaussian_log_density_matches_closed_form() {
    let mut tape = Tape::new();
    let x = tape.constant(&Tensor::matrix(1, 2, vec![0.3, -0.7]).unwrap());
    let mean = tape.constant(&Tensor::matrix(1, 2, vec![0.1, 0.2]).unwrap());
    let log_std = tape.constant(&Tensor::matrix(1, 2, vec![-0.5, 0.3]).unwrap());
    let lp = diag_gaussian_log_density(&mut tape, x, mean, log_std).unwrap();
    let expect: f64 = [(0.3, 0.1, -0.5), (-0.7, 0.2, 0.3)]
        .iter()
        .map(|&(xv, mv, sv): &(f64, f64, f64)| {
            let std = sv.exp();
            -0.5 * ((xv - mv) / std).powi(2) - sv - 0.5 * (2.0 * std::f64::consts::PI).ln()
        })
        .sum();
    assert!((tape.data(lp)[0] - expect).abs() < 1e-12);
}

#[test]
fn diag_gaussian_log_density_gradient_matches_fd() {
    let mut rng = StdRng::seed_from_u64(57);
    let params = ParamVector::new(vec![
        random_tensor(&mut rng, vec![3, 2]),
        random_tensor(&mut rng, vec![3, 2]),
        random_tensor(&mut rng, vec![3, 2]),
    ]);
    let f = |tape: &mut Tape, vars: &[Var]| -> Result<Var, NumericsError> {
        let lp = diag_gaussian_log_density(tape, vars[0], vars[1], vars[2])?;
        tape.mean(lp)
    };
    let analytic = grad(&params, f).unwrap();
    let fd = finite_diff_grad(&params, f);
    assert_close_rel(&analytic.flatten(), &fd.flatten(), 1e-6, 1e-9);
}
