//! Goal-conditioned reinforcement learning laboratory.
//!
//! Soft actor-critic with an N-critic ensemble whose disagreement is mixed
//! into the reward as an intrinsic bonus, hindsight experience replay,
//! layered configuration, categorical hyperparameter studies, MLflow-style
//! file tracking and a step-synchronized live metric stream.

pub mod nn;
pub mod env;
pub mod replay;
pub mod livemetrics;
pub mod config;
pub mod sacvar;
pub mod sweep;
pub mod track;
pub mod cli;
