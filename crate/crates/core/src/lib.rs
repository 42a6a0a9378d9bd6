//! Hierarchical shrinkage Gaussian process emulation and sparse dynamics recovery.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop))]

pub mod adaptive;
pub mod baselines;
pub mod basis;
pub mod bench;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod horseshoe;
pub mod io;
pub mod model;
pub mod predict;
pub mod stochastic;
pub mod testfns;

pub use error::{Error, Result};
