#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod density;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod lower_bound;
pub mod quadrature;
pub mod rates;
pub mod risk;
pub mod sample;
pub mod seed;

pub use error::{Error, Result};
