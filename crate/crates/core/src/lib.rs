//! Effective capacity of two-hop (source → relay → destination) block-fading
//! links whose source and relay buffers carry separate QoS exponents, plus a
//! Monte Carlo tandem-queue simulator that measures the resulting
//! buffer-overflow decay rates.

pub mod error;
pub mod fading;
pub mod lmgf;
pub mod quadrature;

pub use error::{Error, Result};
pub use fading::{FadingDistribution, QuadratureOptions};
pub use lmgf::{db_to_linear, linear_to_db, LinkParams};
pub mod root;
pub mod solver;

pub use solver::{CaseTag, EffCapResult, QosPair, RelayGeometry, Solver, SolverOptions, SourceTilt};
pub mod exec;
pub mod simulator;

pub use exec::Execution;
pub use simulator::{
    estimate_decay, fit_decay, pool_fits, run, run_replications, DecayFit, DecayWindow,
    QueueSelector, QueueStats, SimConfig, SimResult,
};
