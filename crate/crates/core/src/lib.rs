//! Hill estimation when the largest observations may be missing.
//!
//! The HEWE statistic skips the top `⌊δk⌋` order statistics before
//! averaging log-spacings. Its Gaussian limit depends on the tail index
//! `α`, the fraction `δ` of missing extremes and a second-order bias
//! `(ρ, λ)`; [`estimator`] fits all of them by profile likelihood.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod model;
pub mod oracle;
pub mod process;
pub mod report;
pub mod sample;
pub mod simulator;

pub use error::{HeweError, Result};
pub use estimator::{estimate, sweep_endpoints, EstimateResult, GridRange, SearchConfig, SweepEntry};
pub use model::LimitParams;
pub use process::{hewe, hewe_vector, hill_curve, HeweVector, ThetaGrid};
pub use sample::{load_sample, ColumnSelector, Ingested, OrderedSample};
pub use simulator::{run_experiment, Distribution, ExperimentConfig, ExperimentReport};
