//! Cylindrical MIMO near-field imaging: forward model, wavenumber-domain
//! reconstruction, backprojection reference and linear-array analysis.
// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bp;
pub mod cli;
pub mod config;
pub mod error;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod lab;
pub mod rma;
pub mod spectral;

pub use error::{Error, Result};
