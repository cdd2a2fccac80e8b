//! Continuous-control reinforcement-learning workbench.
//!
//! Three off-policy actor-critic algorithms (DDPG, TD3, SAC) behind a
//! common strategy trait, their imitation-augmented variants, and a
//! bi-level meta-learned imitation objective, together with desk-scale
//! sparse-reward environments, demonstration tooling, and analysis
//! utilities.

pub mod algo;
pub mod data;
pub mod envs;
pub mod gild;
pub mod harness;
pub mod nets;
pub mod numerics;
