use super::*;
use crate::data::{RngRegistry, StreamId, Transition, TransitionBatch};
use crate::numerics::{grad_with_value, ParamVector};
use rand_chacha::ChaCha8Rng;

fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng, ChaCha8Rng) {
    let reg = RngRegistry::new(seed);
    (
        reg.stream(StreamId::Init),
        reg.stream(StreamId::Exploration),
        reg.stream(StreamId::Critic),
    )
}

fn toy_batch(m: usize, sd: usize, ad: usize, reward: f64) -> TransitionBatch {
    let mut buf = crate::data::ReplayBuffer::new(m.max(1));
    for i in 0..m {
        let v = (i as f64) / (m as f64) - 0.4;
        buf.push(Transition {
            state: (0..sd).map(|j| v + j as f64 * 0.1).collect(),
            action: (0..ad).map(|j| 0.05 * (j as f64 + 1.0) * v).collect(),
            reward,
            next_state: (0..sd).map(|j| v - j as f64 * 0.05).collect(),
            done: false,
        });
    }
    let mut rng = RngRegistry::new(5).stream(StreamId::Buffer);
    buf.sample(m, &mut rng).unwrap()
}

/// Zero every parameter, then set the output bias so Q == c everywhere.
fn make_constant_critic(params: &mut ParamVector, c: f64) {
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = 0.0;
        }
    }
    let last = params.count() - 1;
    params.tensors_mut()[last].data_mut()[0] = c;
}

#[test]
fn registry_creates_all_three() {
    let (mut init, _, _) = streams(1);
    for name in registry() {
        let algo = create(name, 3, 2, vec![1.0, 1.0], AlgoConfig::default(), &mut init).unwrap();
        assert_eq!(&algo.name(), name);
    }
    assert!(matches!(
        create("ppo", 3, 2, vec![1.0, 1.0], AlgoConfig::default(), &mut init),
        Err(AlgoError::UnknownAlgo(_))
    ));
}

fn small_cfg() -> AlgoConfig {
    AlgoConfig {
        hidden_dims: vec![8, 8],
        batch_size: 6,
        ..AlgoConfig::default()
    }
}

#[test]
fn exploit_is_actor_forward_and_zero_noise_matches() {
    let (mut init, mut expl, _) = streams(2);
    for name in ["ddpg", "td3"] {
        let mut cfg = small_cfg();
        cfg.exploration_noise = 0.0;
        let algo = create(name, 2, 2, vec![0.1, 0.1], cfg, &mut init).unwrap();
        let s = [0.4, -0.2];
        let exploit = algo.select_action(&s, Mode::Exploit, &mut expl).unwrap();
        let explore = algo.select_action(&s, Mode::Explore, &mut expl).unwrap();
        assert_eq!(exploit, explore);
        assert!(exploit.iter().all(|a| a.abs() <= 0.1));
    }
}

#[test]
fn exploration_noise_is_clipped_to_bounds() {
    let (mut init, _, _) = streams(3);
    let mut cfg = small_cfg();
    cfg.exploration_noise = 50.0; // enormous noise, must still clip
    let algo = create("td3", 2, 2, vec![0.1, 0.1], cfg, &mut init).unwrap();
    let mut expl = RngRegistry::new(9).stream(StreamId::Exploration);
    for _ in 0..100 {
        let a = algo
            .select_action(&[0.3, 0.3], Mode::Explore, &mut expl)
            .unwrap();
        assert!(a.iter().all(|v| v.abs() <= 0.1 + 1e-15));
    }
}

#[test]
fn td3_target_noise_respects_clip_over_many_draws() {
    let (mut init, _, mut critic_rng) = streams(4);
    let cfg = small_cfg();
    let td3 = Td3::new(2, 2, vec![1.0, 1.0], cfg.clone(), &mut init);
    let noise = td3.target_noise(50_000, &mut critic_rng);
    let lim = cfg.noise_clip; // scale 1 => clip at +-0.5 exactly
    let mut clipped = 0usize;
    for &v in noise.data() {
        assert!(v.abs() <= lim);
        if v.abs() == lim {
            clipped += 1;
        }
    }
    // sigma = 0.2, clip at 0.5 = 2.5 sigma: some draws must hit the clip
    assert!(clipped > 0);
}

#[test]
fn critic_update_with_zero_td_error_changes_nothing() {
    // gamma = 0, r = 1, Q == 1 everywhere -> zero gradient step.
    let (mut init, _, mut critic_rng) = streams(5);
    let mut cfg = small_cfg();
    cfg.gamma = 0.0;
    let mut algo = Ddpg::new(2, 1, vec![1.0], cfg, &mut init);
    make_constant_critic(&mut algo.critic.params, 1.0);
    make_constant_critic(&mut algo.critic_target, 1.0);
    let before = algo.critic.params.clone();
    let batch = toy_batch(4, 2, 1, 1.0);
    let loss = algo.critic_update(&batch, &mut critic_rng).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(algo.critic.params, before);
}

#[test]
fn critic_update_with_gamma_zero_is_supervised_regression() {
    // Oracle: finite-difference gradient of mean (Q - r)^2.
    let (mut init, _, mut critic_rng) = streams(6);
    let mut cfg = small_cfg();
    cfg.gamma = 0.0;
    let mut algo = Ddpg::new(2, 1, vec![1.0], cfg.clone(), &mut init);
    let before = algo.critic.params.clone();
    let batch = toy_batch(5, 2, 1, 0.7);
    algo.critic_update(&batch, &mut critic_rng).unwrap();

    let critic = algo.critic.clone();
    let eval = |p: &ParamVector| -> f64 {
        let mut tape = crate::numerics::Tape::new();
        let vars = p.const_vars(&mut tape);
        let s = tape.constant(&batch.states);
        let a = tape.constant(&batch.actions);
        let q = critic.forward(&mut tape, &vars, s, a).unwrap();
        let r = tape.constant(&batch.rewards);
        let d = tape.sub(q, r).unwrap();
        let sq = tape.square(d).unwrap();
        let m = tape.mean(sq).unwrap();
        tape.scalar_value(m)
    };
    let mut flat = before.flatten();
    let h = 1e-6;
    let mut fd = vec![0.0; flat.len()];
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + h;
        let hi = eval(&before.unflatten_like(&flat).unwrap());
        flat[i] = orig - h;
        let lo = eval(&before.unflatten_like(&flat).unwrap());
        flat[i] = orig;
        fd[i] = (hi - lo) / (2.0 * h);
    }
    let expected = before.add_scaled(-cfg.lr, &before.unflatten_like(&fd).unwrap());
    for (got, want) in algo.critic.params.flatten().iter().zip(expected.flatten()) {
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }
}

#[test]
fn constant_critic_gives_flat_ddpg_actor_loss() {
    let (mut init, _, _) = streams(7);
    let mut algo = Ddpg::new(2, 1, vec![1.0], small_cfg(), &mut init);
    make_constant_critic(&mut algo.critic.params, 3.25);
    let batch = toy_batch(4, 2, 1, 0.0);
    let (loss, g) = grad_with_value(algo.actor_params(), |tape, vars| {
        algo.rl_actor_loss(tape, vars, &batch.states, None)
            .map_err(super::common::flatten_numerics)
    })
    .unwrap();
    assert!((loss - (-3.25)).abs() < 1e-12);
    assert!(g.max_abs() == 0.0);
}

#[test]
fn sac_actor_loss_is_linear_in_entropy_temperature() {
    let reg = RngRegistry::new(11);
    let make = |temp: f64| {
        let mut init = reg.stream(StreamId::Init);
        let mut cfg = small_cfg();
        cfg.entropy_temp = temp;
        Sac::new(3, 2, vec![1.0, 1.0], cfg, &mut init)
    };
    let batch = toy_batch(5, 3, 2, 0.0);
    let mut actor_rng = reg.stream(StreamId::Actor);
    let sac_ref = make(0.2);
    let noise = sac_ref.sample_reparam_noise(5, &mut actor_rng).unwrap();
    let loss_at = |temp: f64| -> f64 {
        let sac = make(temp);
        let (v, _) = grad_with_value(sac.actor_params(), |tape, vars| {
            sac.rl_actor_loss(tape, vars, &batch.states, Some(&noise))
                .map_err(super::common::flatten_numerics)
        })
        .unwrap();
        v
    };
    let mean_lp = loss_at(1.0) - loss_at(0.0);
    let (a1, a2) = (0.2, 0.7);
    assert!(
        ((loss_at(a1) - loss_at(a2)) - (a1 - a2) * mean_lp).abs() < 1e-10,
        "actor loss must be exactly linear in the temperature"
    );
    // temp = 0 reduces to -mean min-twin Q
    let sac = make(0.0);
    let mut tape = crate::numerics::Tape::new();
    let vars = sac.actor_params().const_vars(&mut tape);
    let s = tape.constant(&batch.states);
    let a = sac
        .policy_action_vars(&mut tape, &vars, s, Some(&noise))
        .unwrap();
    let q = sac.meta_q_vars(&mut tape, s, a).unwrap();
    let qm = tape.mean(q).unwrap();
    assert!((loss_at(0.0) - (-tape.scalar_value(qm))).abs() < 1e-12);
}

#[test]
fn il_loss_is_zero_when_actor_reproduces_demos() {
    let (mut init, _, _) = streams(13);
    let algo = Td3::new(2, 2, vec![0.1, 0.1], small_cfg(), &mut init);
    let states = crate::numerics::Tensor::from_rows(&[
        vec![0.2, -0.3],
        vec![-0.6, 0.1],
        vec![0.0, 0.9],
    ])
    .unwrap();
    let mut actions = Vec::new();
    for i in 0..3 {
        actions.push(algo.actor.act(states.row(i)).unwrap());
    }
    let demo_actions = crate::numerics::Tensor::from_rows(&actions).unwrap();
    let mut tape = crate::numerics::Tape::new();
    let vars = algo.actor_params().const_vars(&mut tape);
    let loss = algo.il_loss(&mut tape, &vars, &states, &demo_actions).unwrap();
    assert_eq!(tape.scalar_value(loss), 0.0);
}

#[test]
fn sac_il_loss_matches_half_log_two_pi_at_mean_demo() {
    // Zero the actor params so mean = 0, log_std = 0 (std 1), and take
    // the demo action exactly at the squashed mean. Then per sample
    // NLL = 0.5 ln(2 pi) + ln(1 - tanh(u)^2) with u = 0.
    let (mut init, _, _) = streams(17);
    let mut sac = Sac::new(2, 1, vec![1.0], small_cfg(), &mut init);
    for t in sac.actor.params.tensors_mut() {
        for v in t.data_mut() {
            *v = 0.0;
        }
    }
    let states = crate::numerics::Tensor::matrix(1, 2, vec![0.3, -0.4]).unwrap();
    let demo_actions = crate::numerics::Tensor::matrix(1, 1, vec![0.0]).unwrap();
    let mut tape = crate::numerics::Tape::new();
    let vars = sac.actor_params().const_vars(&mut tape);
    let loss = sac
        .il_loss(&mut tape, &vars, &states, &demo_actions)
        .unwrap();
    let expect = 0.5 * (2.0 * std::f64::consts::PI).ln(); // tanh(0)=0 => corr 0
    assert!((tape.scalar_value(loss) - expect).abs() < 1e-12);
    assert!((expect - 0.9189385332046727).abs() < 1e-15);
}

#[test]
fn ilrl_weights_follow_the_q_scale_rule() {
    let (mut init, _, _) = streams(19);
    let mut algo = Ddpg::new(2, 1, vec![1.0], small_cfg(), &mut init);
    let batch = toy_batch(4, 2, 1, 0.0);

    make_constant_critic(&mut algo.critic.params, 2.5);
    let (w_rl, w_il) = ilrl_weights(&algo, &batch).unwrap();
    assert_eq!((w_rl, w_il), (1.0, 1.0));

    make_constant_critic(&mut algo.critic.params, 25.0);
    let (w_rl, _) = ilrl_weights(&algo, &batch).unwrap();
    assert!((w_rl - 0.1).abs() < 1e-15);

    make_constant_critic(&mut algo.critic.params, 0.0);
    let (w_rl, _) = ilrl_weights(&algo, &batch).unwrap();
    assert_eq!(w_rl, 2.5e8);
}

#[test]
fn pseudo_update_is_pure_and_leaves_actor_untouched() {
    let (mut init, _, _) = streams(23);
    let algo = Td3::new(2, 2, vec![0.1, 0.1], small_cfg(), &mut init);
    let before = algo.actor_params().clone();
    let batch = toy_batch(6, 2, 2, 0.3);
    let (ds, da) = (
        crate::numerics::Tensor::from_rows(&[vec![0.1, 0.2], vec![-0.3, 0.4]]).unwrap(),
        crate::numerics::Tensor::from_rows(&[vec![0.05, -0.05], vec![0.0, 0.08]]).unwrap(),
    );
    let reg = RngRegistry::new(31);
    let (phi_hat_1, _) =
        pseudo_update(&algo, &batch, &ds, &da, &mut reg.stream(StreamId::Pseudo)).unwrap();
    let (phi_hat_2, _) =
        pseudo_update(&algo, &batch, &ds, &da, &mut reg.stream(StreamId::Pseudo)).unwrap();
    assert_eq!(phi_hat_1, phi_hat_2);
    assert_eq!(algo.actor_params(), &before);
    assert_ne!(&phi_hat_1, algo.actor_params());
}

#[test]
fn pseudo_update_with_zero_lr_is_identity() {
    let (mut init, _, _) = streams(29);
    let mut cfg = small_cfg();
    cfg.lr = 0.0;
    let algo = Td3::new(2, 2, vec![0.1, 0.1], cfg, &mut init);
    let batch = toy_batch(4, 2, 2, 0.0);
    let (ds, da) = (
        crate::numerics::Tensor::from_rows(&[vec![0.1, 0.2]]).unwrap(),
        crate::numerics::Tensor::from_rows(&[vec![0.05, -0.05]]).unwrap(),
    );
    let mut rng = RngRegistry::new(1).stream(StreamId::Pseudo);
    let (phi_hat, _) = pseudo_update(&algo, &batch, &ds, &da, &mut rng).unwrap();
    assert_eq!(&phi_hat, algo.actor_params());
}

#[test]
fn pure_bc_gradient_step_matches_pencil_and_paper() {
    // One-unit deterministic net a = tanh(w s + b) * scale, beta = 0 so
    // w_rl = 0 and the pseudo-update is a pure BC step.
    let (mut init, _, _) = streams(37);
    let mut cfg = small_cfg();
    cfg.beta = 0.0;
    cfg.hidden_dims = vec![1];
    let mut algo = Ddpg::new(1, 1, vec![1.0], cfg.clone(), &mut init);
    // Collapse to a known 1-unit chain: hidden weight 1, relu passthrough
    // on positive input, output weight w, bias 0.
    let w = 0.7;
    {
        let t = algo.actor.params.tensors_mut();
        t[0].data_mut()[0] = 1.0; // input -> hidden
        t[1].data_mut()[0] = 0.0;
        t[2].data_mut()[0] = w; // hidden -> output
        t[3].data_mut()[0] = 0.0;
    }
    let s = 0.5;
    let a_d = 0.2;
    let batch = toy_batch(2, 1, 1, 0.0);
    let ds = crate::numerics::Tensor::matrix(1, 1, vec![s]).unwrap();
    let da = crate::numerics::Tensor::matrix(1, 1, vec![a_d]).unwrap();
    let mut rng = RngRegistry::new(2).stream(StreamId::Pseudo);
    let (phi_hat, _) = pseudo_update(&algo, &batch, &ds, &da, &mut rng).unwrap();

    // L = (tanh(w s) - a_d)^2 ; dL/dw = 2 (tanh(ws) - a_d)(1 - tanh^2(ws)) s
    let t = (w * s).tanh();
    let dl_dw = 2.0 * (t - a_d) * (1.0 - t * t) * s;
    let expect = w - cfg.lr * dl_dw;
    let got = phi_hat.tensors()[2].data()[0];
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
}

#[test]
fn schedules_match_the_update_rules() {
    let (mut init, _, _) = streams(41);
    let ddpg = Ddpg::new(2, 1, vec![1.0], small_cfg(), &mut init);
    let td3 = Td3::new(2, 1, vec![1.0], small_cfg(), &mut init);
    let sac = Sac::new(2, 1, vec![1.0], small_cfg(), &mut init);
    for t in 0..6 {
        assert!(ddpg.actor_step_due(t) && ddpg.target_sync_due(t));
        assert_eq!(td3.actor_step_due(t), t % 2 == 0);
        assert_eq!(td3.target_sync_due(t), t % 2 == 0);
        assert!(sac.actor_step_due(t));
        assert_eq!(sac.target_sync_due(t), t % 2 == 0);
    }
}

#[test]
fn actor_loss_gradients_match_finite_differences() {
    let reg = RngRegistry::new(43);
    let batch = toy_batch(4, 2, 2, 0.1);
    let check = |name: &str| {
        let mut init = reg.stream(StreamId::Init);
        let algo = create(name, 2, 2, vec![0.5, 0.5], small_cfg(), &mut init).unwrap();
        let mut actor_rng = reg.stream(StreamId::Actor);
        let noise = algo.sample_reparam_noise(4, &mut actor_rng);
        let params = algo.actor_params().clone();
        let (_, analytic) = grad_with_value(&params, |tape, vars| {
            algo.rl_actor_loss(tape, vars, &batch.states, noise.as_ref())
                .map_err(super::common::flatten_numerics)
        })
        .unwrap();
        let eval = |p: &ParamVector| -> f64 {
            let mut tape = crate::numerics::Tape::new();
            let vars = p.const_vars(&mut tape);
            let loss = algo
                .rl_actor_loss(&mut tape, &vars, &batch.states, noise.as_ref())
                .unwrap();
            tape.scalar_value(loss)
        };
        let mut flat = params.flatten();
        let h = 1e-5;
        for i in (0..flat.len()).step_by(7) {
            let orig = flat[i];
            flat[i] = orig + h;
            let hi = eval(&params.unflatten_like(&flat).unwrap());
            flat[i] = orig - h;
            let lo = eval(&params.unflatten_like(&flat).unwrap());
            flat[i] = orig;
            let fd = (hi - lo) / (2.0 * h);
            let an = analytic.flatten()[i];
            assert!(
                (an - fd).abs() <= 1e-6 * fd.abs().max(1.0) + 1e-9,
                "{name} param {i}: {an} vs {fd}"
            );
        }
    };
    for name in registry() {
        check(name);
    }
}
