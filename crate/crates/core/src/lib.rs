//! Spatial joint species distribution model with Dirichlet-process clustered
//! factor loadings and Gaussian-process spatial factors.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bvn;
pub mod dists;
pub mod error;
pub mod evaluate;
pub mod gibbs;
pub mod io;
pub mod kernel;
pub mod model;
pub mod simulate;
pub mod svg;
pub mod workflow;

pub use error::{Error, Result};
