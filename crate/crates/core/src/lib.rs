// `!(x > 0.0)` is used on purpose throughout so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod body;
pub mod body_spec;
pub mod cli;
pub mod error;
pub mod expansion;
pub mod functionals;
pub mod gap_analysis;
pub mod harmonics;
pub mod nelder_mead;
pub mod optimizer;
pub mod quadrature;
pub mod recenter;
pub mod sphere_grid;

pub use error::{Error, Result};
