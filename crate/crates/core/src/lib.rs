//! Generalized approximate message passing (GAMP) for binary linear
//! classification and feature selection in the N >> M regime.
//!
//! The crate provides the sum-product and max-sum GAMP iterations with
//! pluggable activation (output) channels and weight-prior (input) channels,
//! EM-based hyperparameter learning, a state-evolution performance
//! predictor, dataset I/O and synthetic generators, and evaluation metrics.

pub mod data;
pub mod em;
pub mod engine;
pub mod error;
pub mod input_channel;
pub mod matrix;
pub mod metrics;
pub mod numeric;
pub mod output_channel;
pub mod se;
