//! End-to-end experiment orchestration: expert training, demonstration
//! collection, baseline and bi-level runs, evaluation, analysis, and
//! plot emission.

mod analyze;
mod config;
mod loops;
mod plot;

pub use analyze::{
    analyze_run_kl, analyze_run_pca, kl_to_behavior, normalized_score, pca_param_path,
    run_snapshots, PcaResult,
};
pub use config::{RunConfig, Variant};
pub use loops::{
    checkpoint_policy, collect_demos, evaluate_agent, evaluate_checkpoint, evaluate_policy,
    select_behavior, train_expert, train_run, EvalSummary, RunArtifacts,
};
pub use plot::{emit_plots, line_chart, Series};

use crate::algo::AlgoError;
use crate::data::DataError;
use crate::envs::EnvError;
use crate::numerics::NumericsError;
use std::fmt;

/// Process exit codes: 0 success, 2 configuration error, 3 numeric
/// abort.
#[derive(Debug)]
pub enum HarnessError {
    Config(String),
    Numeric(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(m) => write!(f, "config error: {m}"),
            HarnessError::Numeric(m) => write!(f, "numeric abort: {m}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<DataError> for HarnessError {
    fn from(e: DataError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<NumericsError> for HarnessError {
    fn from(e: NumericsError) -> Self {
        HarnessError::Numeric(e.to_string())
    }
}

impl From<AlgoError> for HarnessError {
    fn from(e: AlgoError) -> Self {
        match e {
            AlgoError::UnknownAlgo(_) => HarnessError::Config(e.to_string()),
            other => HarnessError::Numeric(other.to_string()),
        }
    }
}
