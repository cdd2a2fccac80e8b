//! Desk-scale continuous-control environments with paired sparse and
//! dense reward channels, plus the progress-threshold sparsification
//! wrapper. Environments are registered by id string and selected at
//! runtime.

mod mass2d;
mod point2d;

pub use mass2d::Mass2d;
pub use point2d::Point2d;

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward_sparse: f64,
    pub reward_dense: f64,
    pub done: bool,
}

/// A resettable simulator. Both reward channels are always produced;
/// which one the training loop consumes is decided by the env id.
pub trait Env: Send {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Per-dimension action bound; actions are clipped, never rejected.
    fn action_scale(&self) -> Vec<f64>;
    fn horizon(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> StepResult;
    /// Scalar forward-progress coordinate, if the env has one.
    fn progress(&self) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardChannel {
    Dense,
    Sparse,
}

pub struct EnvHandle {
    pub env: Box<dyn Env>,
    pub train_channel: RewardChannel,
    pub id: String,
}

impl EnvHandle {
    pub fn train_reward(&self, r: &StepResult) -> f64 {
        match self.train_channel {
            RewardChannel::Dense => r.reward_dense,
            RewardChannel::Sparse => r.reward_sparse,
        }
    }

    /// The dense-channel twin of this environment, used for expert
    /// training and for every evaluation rollout.
    pub fn dense_id(&self) -> String {
        match self.id.rsplit_once('-') {
            Some((base, _)) => format!("{base}-dense"),
            None => self.id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvError {
    UnknownEnv(String),
    NoProgressCoordinate(String),
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::UnknownEnv(id) => {
                write!(f, "unknown environment id {id:?}; known: {:?}", registry())
            }
            EnvError::NoProgressCoordinate(id) => write!(
                f,
                "environment {id:?} exposes no progress coordinate to sparsify"
            ),
        }
    }
}

impl std::error::Error for EnvError {}

/// CLI-facing environment identifiers.
pub fn registry() -> &'static [&'static str] {
    &["point2d-dense", "point2d-sparse", "mass2d-dense", "mass2d-sparse"]
}

pub const MASS2D_DEFAULT_THRESHOLD: f64 = 1.0;

pub fn create(id: &str) -> Result<EnvHandle, EnvError> {
    let (env, channel): (Box<dyn Env>, RewardChannel) = match id {
        "point2d-dense" => (Box::new(Point2d::new()), RewardChannel::Dense),
        "point2d-sparse" => (Box::new(Point2d::new()), RewardChannel::Sparse),
        "mass2d-dense" => (
            Box::new(sparsify(Box::new(Mass2d::new()), MASS2D_DEFAULT_THRESHOLD)?),
            RewardChannel::Dense,
        ),
        "mass2d-sparse" => (
            Box::new(sparsify(Box::new(Mass2d::new()), MASS2D_DEFAULT_THRESHOLD)?),
            RewardChannel::Sparse,
        ),
        other => return Err(EnvError::UnknownEnv(other.to_string())),
    };
    Ok(EnvHandle {
        env,
        train_channel: channel,
        id: id.to_string(),
    })
}

/// Progress-threshold sparsification: one unit of sparse reward each
/// time cumulative progress crosses the next multiple of
/// `threshold_units` within the episode. The dense channel passes
/// through unchanged; the counter resets with the episode.
pub fn sparsify(env: Box<dyn Env>, threshold_units: f64) -> Result<Sparsified, EnvError> {
    if env.progress().is_none() {
        return Err(EnvError::NoProgressCoordinate("wrapped env".to_string()));
    }
    assert!(threshold_units > 0.0);
    Ok(Sparsified {
        inner: env,
        threshold: threshold_units,
        rewarded: 0,
    })
}

pub struct Sparsified {
    inner: Box<dyn Env>,
    threshold: f64,
    /// Threshold multiples already paid out this episode.
    rewarded: i64,
}

impl Env for Sparsified {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn action_scale(&self) -> Vec<f64> {
        self.inner.action_scale()
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn reset(&mut self) -> Vec<f64> {
        self.rewarded = 0;
        self.inner.reset()
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let mut r = self.inner.step(action);
        let progress = self.inner.progress().expect("checked at construction");
        let reached = (progress / self.threshold).floor() as i64;
        let crossings = (reached - self.rewarded).max(0);
        self.rewarded = self.rewarded.max(reached);
        r.reward_sparse = crossings as f64;
        r
    }

    fn progress(&self) -> Option<f64> {
        self.inner.progress()
    }
}

pub(crate) fn clip_action(action: &[f64], scale: &[f64]) -> Vec<f64> {
    action
        .iter()
        .zip(scale)
        .map(|(&a, &s)| a.clamp(-s, s))
        .collect()
}

#[cfg(test)]
mod tests;
