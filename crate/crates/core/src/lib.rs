//! Numerical and exact-arithmetic toolkit for Hamiltonian loops on symplectic blow-ups.
//!
//! Modules build on one another: [`diffgeo`] and [`quad`] provide forms, maps and
//! integration; [`local_model`] the flat model `(C^k, ω₀)`; [`blowup_local`] its one-point
//! blow-up; [`hamloop`] the explicit radial loop; [`bundle`] the normal-bundle model;
//! [`period`] the exact action values; [`cli`] scenario-driven suites.

// `!(x > 0.0)` is used on purpose so that NaN fails parameter checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup_local;
pub mod bundle;
pub mod cli;
pub mod diffgeo;
pub mod error;
pub mod hamloop;
pub mod local_model;
pub mod period;
pub mod quad;

pub use error::{Error, Result};
