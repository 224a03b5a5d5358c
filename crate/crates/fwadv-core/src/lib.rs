//! Projection-free constrained optimization built around momentum Frank-Wolfe.
//!
//! The crate provides exact linear minimization oracles over Lp balls
//! ([`lincon`]), first-order and query-counted value oracles with synthetic
//! test landscapes ([`oracles`]), two-point zeroth-order gradient estimation
//! ([`gradest`]), white-box and black-box attack solvers with sign-step
//! baselines ([`solvers`]), a small trainable MLP classifier with MNIST
//! ingestion ([`models`]), and an experiment harness that batches attacks and
//! aggregates reports ([`harness`]).

pub mod gradest;
pub mod harness;
pub mod lincon;
pub mod models;
pub mod oracles;
pub mod solvers;

pub use lincon::{DenseVector, LpBallConstraint, NormOrder};
