//! Kernel expectile regression trained by exact coordinate ascent on the dual.

pub mod dual;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod model;
pub mod onedim;
pub mod solver;
pub mod twodim;
pub mod types;

pub use dual::{DualState, GapReport};
pub use error::{Error, Result};
pub use kernel::{build_knn, gauss_kernel, KernelCache, KernelMode, KnnIndex};
pub use model::{Model, Scaling};
pub use solver::{train, SolverOptions, Termination, TrainOutcome};
pub use types::{als_loss, als_risk, sample_expectile, HyperParams, Tau, TrainingSet, Wss};
