//! Top-k predictive multiplicity for prediction-based allocation.
//!
//! Single-target ambiguity over the Rashomon ball of near-optimal linear
//! models, multi-target ambiguity and group selection ranges over index-model
//! combining weights, and stable-point identification. Every extreme is
//! computed by an exact branch-and-bound engine ([`solver`]) and can be
//! cross-checked against low-dimensional oracles ([`oracle`]).

pub mod dataset;
pub mod error;
pub mod fairness;
pub mod index_model;
pub mod linear_fit;
pub mod metrics;
pub mod oracle;
pub mod ranking;
pub mod rashomon;
pub mod solver;
pub mod synth;
mod vecs;

pub use dataset::{Basis, Dataset, OrthoBasis, Schema, Split};
pub use error::{Error, Result};
pub use linear_fit::{EpsilonMode, LinearModel, RashomonBall};
pub use ranking::{KappaSpec, RankVector};
