#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Diagonal-Hessian optimal-control optimizer (Diag-OCP) with Hutchinson
//! curvature probes, reference optimizers, synthetic test problems and an
//! experiment harness.
//!
//! Modules, bottom-up:
//!
//! - [`problems`]: loss / gradient / Hessian-vector-product oracles with a
//!   seeded noise channel.
//! - [`hessian_probe`]: Hutchinson diagonal estimation and clipping.
//! - [`diag_ocp`]: the optimizer itself.
//! - [`baselines`]: SGD, Adam, RAdam, diagonal AdaHessian.
//! - [`harness`]: runs, sweeps, ablations, comparisons, verification and
//!   CSV/JSON output.

pub mod baselines;
pub mod diag_ocp;
pub mod error;
pub mod harness;
pub mod hessian_probe;
pub mod problems;
pub mod vector;

pub use error::{Error, Result};
pub use vector::ParamVector;
