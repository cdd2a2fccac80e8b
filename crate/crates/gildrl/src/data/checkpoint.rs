use super::DataError;
use crate::nets::{DeterministicActor, GaussianActor, MlpSpec, OutputActivation};
use crate::numerics::{ParamVector, Tensor};
use std::fs;
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Deterministic,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetShape {
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub action_scale: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Actor checkpoint: a single JSON document. Arrays serialize through
/// serde_json's shortest round-trip decimal form, so reloading is
/// bit-exact.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kind: ActorKind,
    pub algo: String,
    pub env_id: String,
    pub step: u64,
    pub eval_return: f64,
    pub spec: NetShape,
    pub layers: Vec<LayerRecord>,
    pub rng_note: String,
}

impl Checkpoint {
    pub fn from_deterministic(
        actor: &DeterministicActor,
        algo: &str,
        env_id: &str,
        step: u64,
        eval_return: f64,
        rng_note: String,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: ActorKind::Deterministic,
            algo: algo.to_string(),
            env_id: env_id.to_string(),
            step,
            eval_return,
            spec: NetShape {
                state_dim: actor.spec.input_dim,
                action_dim: actor.spec.output_dim,
                hidden_dims: actor.spec.hidden_dims.clone(),
                action_scale: actor.action_scale.clone(),
            },
            layers: layer_records(&actor.params, &["w", "b"]),
            rng_note,
        }
    }

    pub fn from_gaussian(
        actor: &GaussianActor,
        algo: &str,
        env_id: &str,
        step: u64,
        eval_return: f64,
        rng_note: String,
    ) -> Self {
        let mut hidden = actor.trunk.hidden_dims.clone();
        hidden.push(actor.trunk.output_dim);
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kind: ActorKind::Gaussian,
            algo: algo.to_string(),
            env_id: env_id.to_string(),
            step,
            eval_return,
            spec: NetShape {
                state_dim: actor.trunk.input_dim,
                action_dim: actor.action_dim,
                hidden_dims: hidden,
                action_scale: actor.action_scale.clone(),
            },
            layers: layer_records(&actor.params, &["w", "b"]),
            rng_note,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let text =
            serde_json::to_string(self).map_err(|e| DataError::Format(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path)?;
        let ck: Checkpoint =
            serde_json::from_str(&text).map_err(|e| DataError::Format(e.to_string()))?;
        if ck.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(DataError::Format(format!(
                "unsupported checkpoint format_version {}",
                ck.format_version
            )));
        }
        Ok(ck)
    }

    fn params(&self) -> Result<ParamVector, DataError> {
        let mut tensors = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            tensors.push(
                Tensor::from_vec(l.shape.clone(), l.data.clone())
                    .map_err(|e| DataError::Format(format!("layer {}: {e}", l.name)))?,
            );
        }
        Ok(ParamVector::new(tensors))
    }

    pub fn to_deterministic_actor(&self) -> Result<DeterministicActor, DataError> {
        if self.kind != ActorKind::Deterministic {
            return Err(DataError::Format(
                "checkpoint does not hold a deterministic actor".to_string(),
            ));
        }
        let spec = MlpSpec::new(
            self.spec.state_dim,
            self.spec.hidden_dims.clone(),
            self.spec.action_dim,
            OutputActivation::Tanh,
        );
        Ok(DeterministicActor {
            spec,
            action_scale: self.spec.action_scale.clone(),
            params: self.params()?,
        })
    }

    pub fn to_gaussian_actor(&self) -> Result<GaussianActor, DataError> {
        if self.kind != ActorKind::Gaussian {
            return Err(DataError::Format(
                "checkpoint does not hold a gaussian actor".to_string(),
            ));
        }
        let hidden = &self.spec.hidden_dims;
        let trunk = MlpSpec::new(
            self.spec.state_dim,
            hidden[..hidden.len() - 1].to_vec(),
            hidden[hidden.len() - 1],
            OutputActivation::Identity,
        );
        Ok(GaussianActor {
            trunk,
            action_dim: self.spec.action_dim,
            action_scale: self.spec.action_scale.clone(),
            params: self.params()?,
        })
    }
}

fn layer_records(params: &ParamVector, names: &[&str]) -> Vec<LayerRecord> {
    params
        .tensors()
        .iter()
        .enumerate()
        .map(|(i, t)| LayerRecord {
            name: format!("{}{}", names[i % names.len()], i / names.len() + 1),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        })
        .collect()
}
