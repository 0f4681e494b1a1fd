//! Adaptive layer-wise zeroth-order optimization.
//!
//! The crate provides forward-only optimizers (dense MeZO-style SPSA, a
//! bandit-driven sparse variant with a count-aware clipped IPW estimator, and
//! a uniform random-sparse ablation), a set of small analytic objectives, a
//! Monte Carlo verification suite for the estimator's statistical
//! properties, and an experiment runner that writes CSV artifacts.

pub mod bandit;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod experiment;
pub mod objectives;
pub mod optimizers;
pub mod param_store;
pub mod seeds;
pub mod stats;
pub mod validate;

pub use bandit::{BanditConfig, BanditState, SampleDraw};
pub use error::{Error, Result};
pub use estimator::{ScalarGrad, SparseGradSpec};
pub use exec::Exec;
pub use objectives::{GradientOracle, Objective, OracleConfig};
pub use optimizers::{Method, Optimizer, RunConfig, RunOutput, StepReport};
pub use param_store::{LayeredParams, NoiseStream};
