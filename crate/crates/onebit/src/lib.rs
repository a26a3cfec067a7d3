//! Thresholding one-bit compressed sensing toolkit.
//!
//! A signal is measured through random linear projections quantized to a
//! single bit, `y = sign(Phi x + lambda)`, where the known threshold vector
//! `lambda` preserves scale information and keeps the feasible set convex.
//! This crate provides:
//!
//! - instance generation (sparse Bernoulli-Gaussian signals, Gaussian
//!   measurement ensembles, threshold strategies) in [`model`],
//! - l1-minimization reconstruction over the sign-consistent polytope with
//!   verifiable optimality certificates in [`recon`],
//! - a replica-symmetric saddle-point solver predicting the typical mean
//!   squared error of reconstruction for fixed and Gaussian-random threshold
//!   strategies, plus threshold optimization (envelope curves) in [`replica`],
//! - an online threshold-learning rule that steers the empirical positive
//!   output rate toward a target in [`adaptive`],
//! - experiment orchestration with reproducible seeding and CSV/JSON
//!   persistence in [`harness`].
//!
//! Threshold strategies are interchangeable: measurement-side strategies are
//! selected by name through [`model::ThresholdStrategy`], and the analytic
//! side exposes the same families behind the [`replica::ThresholdFamily`]
//! trait, registered by name for runtime selection.

pub mod adaptive;
pub mod error;
pub mod linalg;
pub mod model;
pub mod numerics;
pub mod recon;
pub mod replica;
pub mod harness;

pub use error::{Error, Result};
