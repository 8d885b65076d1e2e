//! Individualized continuous treatment effect estimation from confounded
//! observational data. Training data is augmented with counterfactual
//! treatments whose outcomes are inferred two ways: a first-order Taylor
//! expansion around the observed treatment for nearby doses, and a
//! variance-weighted Gaussian-process posterior over embedding-space
//! neighbors for distant ones. Ships with synthetic benchmark generators,
//! evaluation metrics, and an experiment CLI.

pub mod augment;
pub mod cli;
pub mod data;
pub mod diffnet;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
