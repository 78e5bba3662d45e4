//! Learning affine net-demand prescriptions that minimize two-stage
//! (forward dispatch plus real-time balancing) cost.

pub mod cli;
pub mod cluster;
pub mod datagen;
pub mod dispatch;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod ingest;
pub mod model;
pub mod sample;
pub mod system;
pub mod trainer;

pub use dispatch::{
    balance, forward_dispatch, forward_dispatch_lp, system_optimum, two_stage_cost, BalanceResult,
    Balancer, DispatchResult, DEFAULT_SLACK_PENALTY,
};
pub use error::{Error, Result};
pub use evaluate::{
    delta_cost, evaluate_method, perfect_information_cost, rolling_evaluation, EvaluationReport,
    Method, Protocol,
};
pub use ingest::{interpolate_gaps, load_timeseries, to_samples, NodeSeries};
pub use model::{prescribe, AffineRule, PrescriptionModel};
pub use sample::Sample;
pub use system::{Generator, Line, PowerSystem};
pub use trainer::{
    build_estimation_milp, train_affine, train_partitioned, train_partitioned_with, train_relaxed,
    TrainConfig, TrainerKind,
};
