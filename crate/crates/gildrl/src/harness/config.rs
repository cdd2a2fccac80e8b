use crate::gild::{MetaLossVariant, MetaSign};
use crate::harness::HarnessError;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Vanilla,
    Il,
    Gild,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Il => "il",
            Variant::Gild => "gild",
        }
    }
}

/// Complete experiment specification. Defaults are desk scale; the
/// published scale stays reachable through the config file or
/// overrides.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub env_id: String,
    pub algo: String,
    pub variant: Variant,
    pub total_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub warm_start_fraction: f64,
    pub meta_loss_variant: MetaLossVariant,
    pub meta_sign: MetaSign,
    pub meta_lr_outer: f64,
    pub demo_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub start_steps: u64,
    pub hidden_dim: usize,
    pub batch_size: usize,
    /// RL weight numerator in the imitation-augmented update.
    pub beta: f64,
    /// Gradient-step size for every update rule (actor, critics, and
    /// through it the meta step's inner factor).
    pub lr: f64,
    /// DDPG/TD3 exploration noise std, in action-scale units.
    pub exploration_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env_id: "point2d-sparse".to_string(),
            algo: "td3".to_string(),
            variant: Variant::Vanilla,
            total_steps: 100_000,
            eval_interval: 5_000,
            eval_episodes: 10,
            seed: 0,
            warm_start_fraction: 0.01,
            meta_loss_variant: MetaLossVariant::DifferenceTanh,
            meta_sign: MetaSign::MaximizeSuperiority,
            meta_lr_outer: 3e-4,
            demo_path: None,
            output_dir: PathBuf::from("runs/out"),
            start_steps: 1_000,
            hidden_dim: 64,
            batch_size: 256,
            beta: 2.5,
            lr: 3e-4,
            exploration_noise: 0.2,
        }
    }
}

impl RunConfig {
    /// Parse the flat `key=value` file format: one key per line, `#`
    /// comments, unknown keys rejected.
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!(
                    "{}:{}: expected key=value, got {raw:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            cfg.apply(key.trim(), value.trim()).map_err(|e| {
                HarnessError::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        Ok(cfg)
    }

    /// Apply one `key=value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("bad value for {key}: {e}"))
        }
        match key {
            "env" => self.env_id = value.to_string(),
            "algo" => self.algo = value.to_string(),
            "variant" => {
                self.variant = match value {
                    "vanilla" => Variant::Vanilla,
                    "il" => Variant::Il,
                    "gild" => Variant::Gild,
                    other => return Err(format!("unknown variant {other:?}")),
                }
            }
            "total_steps" => self.total_steps = parse(key, value)?,
            "eval_interval" => self.eval_interval = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "warm_start_fraction" => self.warm_start_fraction = parse(key, value)?,
            "meta_loss_variant" => {
                self.meta_loss_variant = match value {
                    "difference_tanh" => MetaLossVariant::DifferenceTanh,
                    "intuitive" => MetaLossVariant::Intuitive,
                    other => return Err(format!("unknown meta_loss_variant {other:?}")),
                }
            }
            "meta_sign" => {
                self.meta_sign = match value {
                    "maximize_superiority" => MetaSign::MaximizeSuperiority,
                    "literal_eq10" => MetaSign::LiteralEq10,
                    other => return Err(format!("unknown meta_sign {other:?}")),
                }
            }
            "meta_lr_outer" => self.meta_lr_outer = parse(key, value)?,
            "demo_path" => self.demo_path = Some(PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "start_steps" => self.start_steps = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "exploration_noise" => self.exploration_noise = parse(key, value)?,
            other => return Err(format!("unknown config key {other:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.eval_interval == 0 || self.eval_interval > self.total_steps {
            return Err(HarnessError::Config(format!(
                "eval_interval {} must be in 1..=total_steps {}",
                self.eval_interval, self.total_steps
            )));
        }
        if matches!(self.variant, Variant::Il | Variant::Gild) && self.demo_path.is_none() {
            return Err(HarnessError::Config(format!(
                "variant {} requires demo_path",
                self.variant.as_str()
            )));
        }
        if !(0.0..=1.0).contains(&self.warm_start_fraction) {
            return Err(HarnessError::Config(format!(
                "warm_start_fraction {} must lie in [0, 1]",
                self.warm_start_fraction
            )));
        }
        if self.batch_size == 0 || self.hidden_dim == 0 || self.eval_episodes == 0 {
            return Err(HarnessError::Config(
                "batch_size, hidden_dim, eval_episodes must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Resolved key=value form, one key per line (the same format
    /// `from_file` reads back).
    pub fn to_key_values(&self) -> String {
        let mut kv = BTreeMap::new();
        kv.insert("env", self.env_id.clone());
        kv.insert("algo", self.algo.clone());
        kv.insert("variant", self.variant.as_str().to_string());
        kv.insert("total_steps", self.total_steps.to_string());
        kv.insert("eval_interval", self.eval_interval.to_string());
        kv.insert("eval_episodes", self.eval_episodes.to_string());
        kv.insert("seed", self.seed.to_string());
        kv.insert(
            "warm_start_fraction",
            self.warm_start_fraction.to_string(),
        );
        kv.insert(
            "meta_loss_variant",
            match self.meta_loss_variant {
                MetaLossVariant::DifferenceTanh => "difference_tanh".to_string(),
                MetaLossVariant::Intuitive => "intuitive".to_string(),
            },
        );
        kv.insert(
            "meta_sign",
            match self.meta_sign {
                MetaSign::MaximizeSuperiority => "maximize_superiority".to_string(),
                MetaSign::LiteralEq10 => "literal_eq10".to_string(),
            },
        );
        kv.insert("meta_lr_outer", self.meta_lr_outer.to_string());
        if let Some(p) = &self.demo_path {
            kv.insert("demo_path", p.display().to_string());
        }
        kv.insert("output_dir", self.output_dir.display().to_string());
        kv.insert("start_steps", self.start_steps.to_string());
        kv.insert("hidden_dim", self.hidden_dim.to_string());
        kv.insert("batch_size", self.batch_size.to_string());
        kv.insert("beta", self.beta.to_string());
        kv.insert("lr", self.lr.to_string());
        kv.insert("exploration_noise", self.exploration_noise.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}
