//! Nested-region BH procedures for vector-valued p-values.
//!
//! Each null hypothesis comes with a vector of p-values. The procedures here
//! map that vector to a scalar score through a nested family of regions of
//! the unit cube and run Benjamini-Hochberg on the scores.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod procedures;
pub mod regions;
pub mod rng;
pub mod simulation;
pub mod special;
pub mod theory;

pub use error::{Error, Result};
