//! Paneitz operator and non-local Q-curvature flow on exactly known model manifolds.
//!
//! Fields live in symmetry-reduced spectral spaces ([`spectral`]); the operator
//! is assembled by Galerkin quadrature ([`paneitz`]) and drives the flow
//! ([`qflow`]), the Green's function fits ([`green`]) and bubble quotients
//! ([`bubbles`]).

// `!(x > 0.0)` is used deliberately so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bubbles;
pub mod conformal;
pub mod error;
pub mod green;
pub mod models;
pub mod paneitz;
pub mod par;
pub mod qflow;
pub mod spectral;

pub use error::{Error, Result};
pub use models::{ModelKind, ModelManifold, Point};
pub use paneitz::PaneitzOperator;
pub use spectral::{Discretization, Field, Symmetry};
