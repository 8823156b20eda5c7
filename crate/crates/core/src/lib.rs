//! Modeling of continuous-time categorical event sequences (state transitions
//! plus discretized dwell times) as mutually-correcting point processes.
//!
//! The per-class event intensities are log-linear in a composed feature vector
//! (a time-scaled static profile plus a kernel-weighted sum of historical
//! event features), so the conditional next-state and next-duration
//! distributions are softmaxes over the intensities and the model trains as a
//! two-head multinomial regression with a row-wise group-lasso penalty, solved
//! by ADMM. The crate also ships imbalance-robust preprocessing (sample
//! weighting, hierarchical binary chains, synthetic balanced oversampling),
//! first-order Markov-chain baselines, per-class accuracy metrics, cohort
//! occupancy simulation, and a planted-parameter sequence generator.
//!
//! ```
//! use careflow::learner::{admm_fit, SolverConfig, TrainSample};
//! use careflow::model::FeatureVector;
//!
//! let samples = vec![
//!     TrainSample::new(FeatureVector::new(vec![1.0, 0.0]).unwrap(), 1, Some(1)),
//!     TrainSample::new(FeatureVector::new(vec![0.0, 1.0]).unwrap(), 2, Some(2)),
//! ];
//! let config = SolverConfig { gamma: 0.1, beta0: 0.1, seed: 7, ..SolverConfig::default() };
//! let outcome = admm_fit(&samples, 2, 2, &config).unwrap();
//! assert!(outcome.report.final_loss.is_finite());
//! ```

pub mod baselines;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod imbalance;
pub mod learner;
pub mod model;
pub mod persist;
pub mod predict;
pub mod samples;
pub mod seeding;

pub use error::{Error, Result};
