//! Spectral laboratory for two-dimensional magnetic Laplacians whose field
//! vanishes linearly along a curve.
//!
//! The pipeline reduces the 2D problem to a family of 1D fiber operators
//! (`montgomery`), builds scalar effective symbols from their dispersive
//! curves (`effective`), and checks every asymptotic prediction against a
//! direct eigensolve in dilated tubular coordinates (`magnetic2d`).

pub mod effective;
pub mod error;
pub mod geometry;
pub mod interp;
pub mod lab;
pub mod linalg;
pub mod magnetic2d;
pub mod montgomery;
pub mod spectrum;

pub use error::{Error, Result};
