//! Direct sparse change detection between two pairwise Markov networks.
//!
//! The change `θ = θ_p − θ_q` between the parameters of two networks is
//! estimated directly from samples of both, by fitting a log-linear density
//! ratio model with the KLIEP loss under a group-lasso penalty. Around that
//! estimator the crate provides synthetic network samplers, a
//! covariance-based differential network baseline, support recovery and ROC
//! metrics, assumption diagnostics and an experiment harness.

pub mod baseline;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod io;
pub mod kliep;
pub mod model;
pub mod optim;
pub mod samplers;
pub mod seed;

pub use error::{Error, Result};
pub use kliep::{FisherInfo, KliepProblem};
pub use model::{FeatureMap, FeatureTensor, PairIndex, ParameterVector, SampleMatrix};
pub use optim::{solve, solve_path, PathConfig, SolverConfig, SolverReport};
