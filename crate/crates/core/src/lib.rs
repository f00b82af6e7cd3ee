//! Multi-label classification with a boosted cascade of classifier levels.
//!
//! Each cascade level is a small two-layer network that reads the per-class
//! probabilities of every preceding level. Levels are trained one after the
//! other; the training draws for level `l + 1` are resampled so that examples
//! level `l` found hard are seen more often. Inference averages the
//! probabilities of all levels.
//!
//! Module map:
//!
//! * [`diffkernel`] dense layers, per-class softmax heads, SGD and gradient checking
//! * [`losses`] weighted binary-relevance cross-entropy and smooth pairwise-error loss
//! * [`sampling`] class rebalancing and the rank-based difficulty sampler
//! * [`cascade`] cascade construction, stage-wise training and averaging inference
//! * [`metrics`] per-class ROC-AUC and report rendering
//! * [`data`] synthetic multi-label data, dataset CSV, label metadata parsing
//! * [`config`] experiment configuration files and overrides
//! * [`checks`] randomized gradient checks
//! * [`experiments`] the bundled label-dependency experiment
//! * [`cli`] the `bcascade` command-line tool

pub mod cascade;
pub mod checks;
pub mod cli;
pub mod config;
pub mod data;
pub mod diffkernel;
mod error;
pub mod experiments;
pub mod losses;
pub mod metrics;
pub mod par;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
