use super::config::{RunConfig, Variant};
use super::HarnessError;
use crate::algo::{self, Algorithm, Mode};
use crate::data::{
    write_eval_csv, write_train_csv, Checkpoint, DemoMetadata, DemonstrationSet, EvalRecord,
    ReplayBuffer, RngRegistry, RunLog, StreamId, TrainRecord, Transition,
    DEFAULT_BUFFER_CAPACITY,
};
use crate::envs::{self, EnvHandle};
use crate::gild::{
    gild_actor_update, gild_meta_update, meta_loss, warmstart_gate, GildState, RetainedPath,
};
use crate::nets::GildNet;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub struct RunArtifacts {
    pub log: RunLog,
    pub final_checkpoint: PathBuf,
    pub snapshot_paths: Vec<PathBuf>,
}

struct Streams {
    exploration: ChaCha8Rng,
    buffer: ChaCha8Rng,
    critic: ChaCha8Rng,
    actor: ChaCha8Rng,
    pseudo: ChaCha8Rng,
    gild: ChaCha8Rng,
    demo: ChaCha8Rng,
    val: ChaCha8Rng,
}

impl Streams {
    fn new(reg: &RngRegistry) -> Self {
        Streams {
            exploration: reg.stream(StreamId::Exploration),
            buffer: reg.stream(StreamId::Buffer),
            critic: reg.stream(StreamId::Critic),
            actor: reg.stream(StreamId::Actor),
            pseudo: reg.stream(StreamId::Pseudo),
            gild: reg.stream(StreamId::Gild),
            demo: reg.stream(StreamId::Demo),
            val: reg.stream(StreamId::Val),
        }
    }
}

/// Execute the per-step training loop for one configuration: act on the
/// training channel, store, update critic, run the variant's actor
/// machinery, sync targets on schedule, evaluate on the dense channel,
/// and log everything. On a numeric abort the logs and checkpoints
/// written so far are retained.
pub fn train_run(cfg: &RunConfig) -> Result<RunArtifacts, HarnessError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let snapshot_dir = cfg.output_dir.join("snapshots");
    std::fs::create_dir_all(&snapshot_dir)?;
    std::fs::write(cfg.output_dir.join("config.txt"), cfg.to_key_values())?;

    let mut handle = envs::create(&cfg.env_id)?;
    let state_dim = handle.env.state_dim();
    let action_dim = handle.env.action_dim();
    let action_scale = handle.env.action_scale();

    let registry = RngRegistry::new(cfg.seed);
    let mut init = registry.stream(StreamId::Init);
    let mut streams = Streams::new(&registry);

    let algo_cfg = algo::AlgoConfig {
        batch_size: cfg.batch_size,
        hidden_dims: vec![cfg.hidden_dim, cfg.hidden_dim],
        beta: cfg.beta,
        lr: cfg.lr,
        exploration_noise: cfg.exploration_noise,
        ..algo::AlgoConfig::default()
    };
    let lr = algo_cfg.lr;
    let mut agent = algo::create(
        &cfg.algo,
        state_dim,
        action_dim,
        action_scale.clone(),
        algo_cfg,
        &mut init,
    )?;

    // The objective net draws after the agent's networks, so vanilla
    // and bi-level runs share identical actor/critic bits per seed.
    let mut gild = match cfg.variant {
        Variant::Gild => {
            let net = GildNet::new(
                state_dim,
                action_dim,
                &[cfg.hidden_dim, cfg.hidden_dim],
                &mut init,
            );
            let mut gs = GildState::new(net, lr);
            gs.meta_lr_outer = cfg.meta_lr_outer;
            gs.meta_loss_variant = cfg.meta_loss_variant;
            gs.meta_sign = cfg.meta_sign;
            gs.warm_start_fraction = cfg.warm_start_fraction;
            Some(gs)
        }
        _ => None,
    };

    let demos = match cfg.variant {
        Variant::Il | Variant::Gild => {
            let path = cfg.demo_path.as_ref().expect("validated");
            Some(load_demos_for_env(path, &handle)?)
        }
        Variant::Vanilla => None,
    };

    let mut buffer = ReplayBuffer::new(DEFAULT_BUFFER_CAPACITY);
    let mut log = RunLog::new();
    let mut snapshot_paths = Vec::new();
    let mut state = handle.env.reset();

    let result = (|| -> Result<(), HarnessError> {
        for t in 0..cfg.total_steps {
            let step_start = Instant::now();

            let action = if t < cfg.start_steps {
                uniform_action(&action_scale, &mut streams.exploration)
            } else {
                agent.select_action(&state, Mode::Explore, &mut streams.exploration)?
            };
            let sr = handle.env.step(&action);
            let reward = handle.train_reward(&sr);
            buffer.push(Transition {
                state: state.clone(),
                action,
                reward,
                next_state: sr.next_state.clone(),
                done: sr.done,
            });
            state = if sr.done {
                handle.env.reset()
            } else {
                sr.next_state
            };

            let mut rec = TrainRecord {
                step: t,
                critic_loss: 0.0,
                actor_loss: 0.0,
                gild_loss: 0.0,
                meta_loss: 0.0,
                wall_ms: 0.0,
            };

            if t >= cfg.start_steps {
                let batch = buffer.sample(cfg.batch_size, &mut streams.buffer)?;
                rec.critic_loss = agent.critic_update(&batch, &mut streams.critic)?;

                if agent.actor_step_due(t) {
                    match cfg.variant {
                        Variant::Vanilla => {
                            rec.actor_loss = algo::actor_update_vanilla(
                                agent.as_mut(),
                                &batch,
                                &mut streams.actor,
                            )?;
                        }
                        Variant::Il => {
                            let d = demos.as_ref().expect("validated");
                            let (ds, da) = d.sample_batch(cfg.batch_size, &mut streams.demo);
                            rec.actor_loss = algo::actor_update_il(
                                agent.as_mut(),
                                &batch,
                                &ds,
                                &da,
                                &mut streams.actor,
                            )?;
                        }
                        Variant::Gild => {
                            let gs = gild.as_mut().expect("validated");
                            if warmstart_gate(t, cfg.total_steps, gs.warm_start_fraction) {
                                let d = demos.as_ref().expect("validated");
                                let (ds, da) =
                                    d.sample_batch(cfg.batch_size, &mut streams.demo);
                                let (phi_hat, _pseudo_loss) = algo::pseudo_update(
                                    agent.as_ref(),
                                    &batch,
                                    &ds,
                                    &da,
                                    &mut streams.pseudo,
                                )?;
                                let (retained, rl_loss, gild_loss): (RetainedPath, f64, f64) =
                                    gild_actor_update(
                                        agent.as_mut(),
                                        gs,
                                        &batch,
                                        &ds,
                                        &da,
                                        &mut streams.actor,
                                        &mut streams.gild,
                                    )?;
                                let val_states =
                                    buffer.sample_states(cfg.batch_size, &mut streams.val)?;
                                let (meta_value, v) = meta_loss(
                                    agent.as_ref(),
                                    gs.meta_loss_variant,
                                    agent.actor_params(),
                                    &phi_hat,
                                    &val_states,
                                )?;
                                gild_meta_update(gs, agent.as_ref(), &v, &retained)?;
                                rec.actor_loss = rl_loss;
                                rec.gild_loss = gild_loss;
                                rec.meta_loss = meta_value;
                            } else {
                                rec.actor_loss = algo::actor_update_vanilla(
                                    agent.as_mut(),
                                    &batch,
                                    &mut streams.actor,
                                )?;
                            }
                        }
                    }
                }
                if agent.target_sync_due(t) {
                    agent.sync_targets();
                }
            }

            if (t + 1) % cfg.eval_interval == 0 {
                let eval_idx = (t + 1) / cfg.eval_interval;
                let summary = evaluate_agent(
                    agent.as_ref(),
                    &handle.dense_id(),
                    cfg.eval_episodes,
                    &registry,
                    eval_idx,
                )?;
                log.push_eval(EvalRecord {
                    step: t + 1,
                    mean_dense_return: summary.mean_return,
                    std_dense_return: summary.std_return,
                });
                let ck = agent.make_checkpoint(
                    &cfg.env_id,
                    t + 1,
                    summary.mean_return,
                    format!("master seed {}, init stream", cfg.seed),
                );
                let path = snapshot_dir.join(format!("step_{:09}.json", t + 1));
                ck.save(&path)?;
                snapshot_paths.push(path);
            }

            // seconds per step -> milliseconds per 1000 steps
            rec.wall_ms = step_start.elapsed().as_secs_f64() * 1e6;
            log.push_train(rec);
        }
        Ok(())
    })();

    // Retain whatever was logged, then surface any abort.
    write_eval_csv(&log.eval, &cfg.output_dir.join("eval.csv"))?;
    write_train_csv(&log.train, &cfg.output_dir.join("train.csv"))?;
    let final_path = cfg.output_dir.join("checkpoint.json");
    let final_return = log.eval.last().map_or(f64::NAN, |e| e.mean_dense_return);
    agent
        .make_checkpoint(
            &cfg.env_id,
            cfg.total_steps,
            final_return,
            format!("master seed {}, init stream", cfg.seed),
        )
        .save(&final_path)?;
    result?;

    Ok(RunArtifacts {
        log,
        final_checkpoint: final_path,
        snapshot_paths,
    })
}

/// Expert training is the vanilla variant on the dense channel; the
/// snapshot series is the checkpoint series and the last checkpoint is
/// the expert.
pub fn train_expert(cfg: &RunConfig) -> Result<RunArtifacts, HarnessError> {
    let mut expert_cfg = cfg.clone();
    expert_cfg.variant = Variant::Vanilla;
    if !expert_cfg.env_id.ends_with("-dense") {
        return Err(HarnessError::Config(format!(
            "expert training wants a dense-channel env, got {:?}",
            expert_cfg.env_id
        )));
    }
    train_run(&expert_cfg)
}

fn uniform_action(scale: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    scale.iter().map(|&s| rng.random_range(-s..=s)).collect()
}

pub struct EvalSummary {
    pub mean_return: f64,
    pub std_return: f64,
    pub returns: Vec<f64>,
    /// Per-episode flag: any sparse reward observed (goal events).
    pub reached: Vec<bool>,
}

/// Exploit-mode rollouts on the dense channel of `env_id`.
pub fn evaluate_agent(
    agent: &dyn Algorithm,
    dense_env_id: &str,
    episodes: usize,
    registry: &RngRegistry,
    eval_idx: u64,
) -> Result<EvalSummary, HarnessError> {
    evaluate_policy(
        |s, rng| agent.select_action(s, Mode::Exploit, rng).map_err(Into::into),
        dense_env_id,
        episodes,
        registry,
        eval_idx,
    )
}

/// Shared rollout helper; the policy closure sees the per-episode eval
/// stream so results are permutation-identical however episodes are
/// ordered.
pub fn evaluate_policy<F>(
    mut policy: F,
    dense_env_id: &str,
    episodes: usize,
    registry: &RngRegistry,
    eval_idx: u64,
) -> Result<EvalSummary, HarnessError>
where
    F: FnMut(&[f64], &mut ChaCha8Rng) -> Result<Vec<f64>, HarnessError>,
{
    let mut handle = envs::create(dense_env_id)?;
    let mut returns = Vec::with_capacity(episodes);
    let mut reached = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let mut rng = registry.eval_episode_stream(eval_idx, ep as u64);
        let mut state = handle.env.reset();
        let mut ret = 0.0;
        let mut hit = false;
        loop {
            let action = policy(&state, &mut rng)?;
            let sr = handle.env.step(&action);
            ret += sr.reward_dense;
            if sr.reward_sparse > 0.0 {
                hit = true;
            }
            if sr.done {
                break;
            }
            state = sr.next_state;
        }
        returns.push(ret);
        reached.push(hit);
    }
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
        / returns.len() as f64;
    Ok(EvalSummary {
        mean_return: mean,
        std_return: var.sqrt(),
        returns,
        reached,
    })
}

/// Evaluate a saved checkpoint: exploit actions on the dense channel.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    env_id: &str,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary, HarnessError> {
    let ck = Checkpoint::load(checkpoint)?;
    let registry = RngRegistry::new(seed);
    let dense_id = envs::create(env_id)?.dense_id();
    let policy = checkpoint_policy(&ck)?;
    evaluate_policy(
        |s, _rng| policy(s),
        &dense_id,
        episodes,
        &registry,
        0,
    )
}

type PolicyFn = Box<dyn Fn(&[f64]) -> Result<Vec<f64>, HarnessError>>;

/// Exploit policy closure for either checkpoint kind.
pub fn checkpoint_policy(ck: &Checkpoint) -> Result<PolicyFn, HarnessError> {
    match ck.kind {
        crate::data::ActorKind::Deterministic => {
            let actor = ck.to_deterministic_actor()?;
            Ok(Box::new(move |s| actor.act(s).map_err(Into::into)))
        }
        crate::data::ActorKind::Gaussian => {
            let actor = ck.to_gaussian_actor()?;
            Ok(Box::new(move |s| actor.act_mean(s).map_err(Into::into)))
        }
    }
}

/// First checkpoint of the series that clears the sub-optimality
/// threshold: `rho * expert_max` for positive expert returns, or the
/// symmetric `expert_max / rho` when returns are negative (desk
/// environments with negative dense returns). `rho = 0` selects the
/// first checkpoint.
pub fn select_behavior(
    snapshots: &[PathBuf],
    rho: f64,
) -> Result<(PathBuf, Checkpoint), HarnessError> {
    if snapshots.is_empty() {
        return Err(HarnessError::Config(
            "no checkpoints to select a behavior from".to_string(),
        ));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(HarnessError::Config(format!(
            "rho {rho} must lie in [0, 1]"
        )));
    }
    let mut series = Vec::with_capacity(snapshots.len());
    for p in snapshots {
        series.push((p.clone(), Checkpoint::load(p)?));
    }
    series.sort_by_key(|(_, ck)| ck.step);
    let expert_max = series
        .iter()
        .map(|(_, ck)| ck.eval_return)
        .fold(f64::NEG_INFINITY, f64::max);
    let threshold = if rho == 0.0 {
        f64::NEG_INFINITY
    } else if expert_max > 0.0 {
        rho * expert_max
    } else {
        expert_max / rho
    };
    if rho == 1.0 {
        eprintln!("warning: rho = 1 selects the expert itself");
    }
    for (p, ck) in series {
        if ck.eval_return >= threshold {
            return Ok((p, ck));
        }
    }
    Err(HarnessError::Config(format!(
        "no checkpoint reaches {threshold:.4} (expert max {expert_max:.4}); try a lower rho"
    )))
}

/// Roll exploit episodes with the checkpointed policy on the dense
/// channel, recording state-action pairs until `n_samples`. The
/// measured behavior return (mean over the completed episodes) lands
/// in the metadata.
pub fn collect_demos(
    checkpoint_path: &Path,
    env_id: &str,
    n_samples: usize,
) -> Result<DemonstrationSet, HarnessError> {
    let ck = Checkpoint::load(checkpoint_path)?;
    let policy = checkpoint_policy(&ck)?;
    let dense_id = envs::create(env_id)?.dense_id();
    let mut handle = envs::create(&dense_id)?;
    let mut set = DemonstrationSet::new(
        handle.env.state_dim(),
        handle.env.action_dim(),
        DemoMetadata {
            env_id: handle.id.clone(),
            behavior_return: 0.0,
            sample_count: 0,
            source_checkpoint: Some(checkpoint_path.display().to_string()),
        },
    );
    let mut pairs = Vec::new();
    let mut episode_returns = Vec::new();
    while pairs.len() < n_samples {
        let mut state = handle.env.reset();
        let mut ret = 0.0;
        loop {
            let action = policy(&state)?;
            pairs.push((state.clone(), action.clone()));
            let sr = handle.env.step(&action);
            ret += sr.reward_dense;
            if sr.done {
                break;
            }
            state = sr.next_state;
        }
        episode_returns.push(ret);
    }
    pairs.truncate(n_samples);
    set.metadata.behavior_return =
        episode_returns.iter().sum::<f64>() / episode_returns.len() as f64;
    for (s, a) in pairs {
        set.push(s, a);
    }
    Ok(set)
}

/// Load demos and check them against the environment: dims must match,
/// out-of-bounds actions are clamped with a warning.
fn load_demos_for_env(
    path: &Path,
    handle: &EnvHandle,
) -> Result<DemonstrationSet, HarnessError> {
    let set = DemonstrationSet::load(path)?;
    if set.state_dim() != handle.env.state_dim() || set.action_dim() != handle.env.action_dim() {
        return Err(HarnessError::Config(format!(
            "demo dims ({}, {}) do not match env {:?} dims ({}, {})",
            set.state_dim(),
            set.action_dim(),
            handle.id,
            handle.env.state_dim(),
            handle.env.action_dim()
        )));
    }
    if set.is_empty() {
        return Err(HarnessError::Config(format!(
            "demonstration set {} is empty",
            path.display()
        )));
    }
    let scale = handle.env.action_scale();
    let mut clamped = 0usize;
    let meta = set.metadata.clone();
    let mut rebuilt = DemonstrationSet::new(set.state_dim(), set.action_dim(), meta);
    for (s, a) in set.pairs() {
        let mut a = a.clone();
        for (v, &b) in a.iter_mut().zip(&scale) {
            if v.abs() > b {
                *v = v.clamp(-b, b);
                clamped += 1;
            }
        }
        rebuilt.push(s.clone(), a);
    }
    if clamped > 0 {
        eprintln!(
            "warning: clamped {clamped} demo action components to the env bounds"
        );
    }
    rebuilt.metadata.sample_count = set.len();
    Ok(rebuilt)
}
