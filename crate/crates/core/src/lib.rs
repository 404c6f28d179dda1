//! Citation intent classification with an ensemble of paired binary experts.
//!
//! Each class gets two one-vs-all experts built on different text encoders.
//! Their positive-class probabilities form a 2K-dimensional z-vector that is
//! fused by a voting rule, a fitted weighting scheme or a learned meta-classifier.
//! Predictions can be explained with exact Shapley values over the z-vector and
//! mapped to CiTO citation-function IRIs.

pub mod aggregate;
pub mod bundle;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experts;
pub mod explain;
pub mod features;
pub mod fusion;
pub mod meta;
pub mod pipeline;
pub mod service;
pub mod synth;
pub mod train;
pub mod weighting;

pub use error::{Error, Result};
