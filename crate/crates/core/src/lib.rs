//! Feed-forward networks assembled from parametric lenses, trained with
//! gradient dropout: Bernoulli masks gate the backward pass per neuron while
//! the forward pass stays untouched.
//!
//! Besides the training engine the crate carries the pieces needed to study
//! it: target-variable noising (Gaussian and alpha-stable), an input-noise
//! robustness sweep over tabular datasets, the usual regression and
//! classification metrics, and an iterated public goods game whose agents
//! stand in for neurons choosing between composable features and shortcuts.

pub mod bench;
pub mod config;
pub mod data;
pub mod dropout;
pub mod error;
pub mod lens;
pub mod metrics;
pub mod optim;
pub mod pgg;
pub mod plot;
pub mod stochastics;

pub use error::{Error, Result};
