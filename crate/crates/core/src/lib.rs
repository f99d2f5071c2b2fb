//! Extremal compatible linear connections of Finsler metrics on a single chart,
//! and a sampled decision procedure for the generalized Berwald property.

pub mod averaging;
pub mod berwald;
pub mod error;
pub mod expr;
pub mod metric;
pub mod quadrature;
pub mod spec_file;
pub mod torsion;

pub use error::{Error, Result};
