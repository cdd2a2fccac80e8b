//! Replay buffer, demonstration storage, checkpointing, RNG stream
//! discipline, and the on-disk formats.

mod checkpoint;
mod demo;
mod runlog;

pub use checkpoint::{ActorKind, Checkpoint, LayerRecord, NetShape};
pub use demo::{DemoMetadata, DemonstrationSet};
pub use runlog::{
    load_eval_csv, load_train_csv, write_eval_csv, write_train_csv, EvalRecord, RunLog,
    TrainRecord,
};

use crate::numerics::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;

pub const DEFAULT_BUFFER_CAPACITY: usize = 2_000_000;

#[derive(Debug)]
pub enum DataError {
    Io(std::io::Error),
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    Format(String),
    EmptyBuffer,
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io(e) => write!(f, "io error: {e}"),
            DataError::Parse { path, line, detail } => {
                write!(f, "{path}:{line}: {detail}")
            }
            DataError::Format(d) => write!(f, "format error: {d}"),
            DataError::EmptyBuffer => write!(f, "cannot sample from an empty replay buffer"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Column-stacked minibatch of transitions.
pub struct TransitionBatch {
    pub states: Tensor,
    pub actions: Tensor,
    /// `[m,1]`
    pub rewards: Tensor,
    pub next_states: Tensor,
    /// `[m,1]`, 1.0 where the episode ended.
    pub dones: Tensor,
}

/// Fixed-capacity ring buffer; oldest entries overwritten first.
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            storage: Vec::new(),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.storage[i]
    }

    /// `n` uniform draws with replacement; deterministic given the
    /// stream state.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<TransitionBatch, DataError> {
        if self.storage.is_empty() {
            return Err(DataError::EmptyBuffer);
        }
        let idx: Vec<usize> = (0..n)
            .map(|_| rng.random_range(0..self.storage.len()))
            .collect();
        Ok(self.gather(&idx))
    }

    /// Sample only the state columns (validation states for the meta
    /// loss).
    pub fn sample_states<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Tensor, DataError> {
        Ok(self.sample(n, rng)?.states)
    }

    fn gather(&self, idx: &[usize]) -> TransitionBatch {
        let sd = self.storage[0].state.len();
        let ad = self.storage[0].action.len();
        let m = idx.len();
        let mut states = Vec::with_capacity(m * sd);
        let mut actions = Vec::with_capacity(m * ad);
        let mut rewards = Vec::with_capacity(m);
        let mut next_states = Vec::with_capacity(m * sd);
        let mut dones = Vec::with_capacity(m);
        for &i in idx {
            let t = &self.storage[i];
            states.extend_from_slice(&t.state);
            actions.extend_from_slice(&t.action);
            rewards.push(t.reward);
            next_states.extend_from_slice(&t.next_state);
            dones.push(if t.done { 1.0 } else { 0.0 });
        }
        TransitionBatch {
            states: Tensor::from_vec(vec![m, sd], states).expect("batch states"),
            actions: Tensor::from_vec(vec![m, ad], actions).expect("batch actions"),
            rewards: Tensor::from_vec(vec![m, 1], rewards).expect("batch rewards"),
            next_states: Tensor::from_vec(vec![m, sd], next_states).expect("batch next states"),
            dones: Tensor::from_vec(vec![m, 1], dones).expect("batch dones"),
        }
    }
}

/// Named derived RNG streams off one master seed. Streams advance
/// independently, so optional machinery (demo batches, validation
/// batches) never perturbs the draws shared with a vanilla run.
#[derive(Clone, Copy, Debug)]
pub struct RngRegistry {
    master: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamId {
    Init = 1,
    Env = 2,
    Exploration = 3,
    /// Main-batch index draws.
    Buffer = 4,
    /// Target-action noise inside critic updates.
    Critic = 5,
    /// Reparameterization noise for the live actor's update.
    Actor = 6,
    /// Reparameterization noise for the pseudo-update arm.
    Pseudo = 7,
    /// Reparameterization noise for the imitation-objective actions.
    Gild = 8,
    /// Demonstration-batch index draws.
    Demo = 9,
    /// Validation-batch index draws.
    Val = 10,
    Eval = 11,
}

impl RngRegistry {
    pub fn new(master: u64) -> Self {
        RngRegistry { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, id: StreamId) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(id as u64);
        rng
    }

    /// Stream for one evaluation episode, independent of every other
    /// episode so parallel evaluation stays permutation-identical.
    pub fn eval_episode_stream(&self, eval_index: u64, episode: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(StreamId::Eval as u64);
        rng.set_word_pos(u128::from(eval_index) << 40 | u128::from(episode) << 20);
        rng
    }
}

/// Standard-normal draw vector.
pub fn normal_vec<R: Rng>(rng: &mut R, n: usize, std: f64) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

/// Standard-normal tensor of the given shape.
pub fn normal_tensor<R: Rng>(rng: &mut R, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, normal_vec(rng, n, 1.0)).expect("normal tensor")
}
