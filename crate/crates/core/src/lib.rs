//! Conditional distribution regression by classification.
//!
//! The response range is cut into bins, a softmax classifier estimates the
//! probability of each bin given the covariates, and the bin probabilities
//! become a piecewise-constant conditional density with a piecewise-linear
//! CDF. Classifiers are trained either with the multinomial log-likelihood
//! or with the joint binary cross-entropy over all cut-points. Averaging
//! estimators built on independently drawn random partitions gives the
//! ensemble estimator.

pub mod dataio;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod nn;
pub mod partition;
pub mod recipe;
pub mod rng;
pub mod scoring;
pub mod simgen;

pub use error::{Error, Result};
pub use nn::{Loss, Network, NetworkConfig, TrainConfig};
pub use partition::Partition;
