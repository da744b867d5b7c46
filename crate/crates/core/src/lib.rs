//! Learned time-varying edge weights for linear average consensus.
//!
//! A schedule of per-edge weights is trained by unrolling the protocol into
//! a linear network and running online Adam on the squared final error. The
//! crate also provides static-optimal and finite-time baselines, Monte Carlo
//! error estimation, and asymptotic rate certification from the spectrum of
//! the period product.

pub mod adam;
pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod generators;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod named;
pub mod rng;
pub mod schedule_io;
pub mod train;
pub mod unfold;

pub use baselines::{
    best_constant_weight, finite_time_plan, run_finite_time, static_optimal_weights, BestConstant, FiniteTimePlan,
    FiniteTimeRun, FiniteTimeVariant, StaticWeights,
};
pub use dynamics::{
    asymptotic_convergence_factor, consensus_error, estimate_epsilon, sample_initial, simulate, step, EpsilonEstimate,
    InitialDistribution, Trajectory, WeightSchedule,
};
pub use error::{ConsensusError, Result};
pub use graph::{EdgeWeights, Graph};
pub use linalg::DenseMatrix;
pub use train::{train_incremental, Nonnegativity, TrainConfig};
