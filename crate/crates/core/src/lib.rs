// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod cli;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod montecarlo;
pub mod panel;
pub mod two_step;

pub use error::{Error, Result};
