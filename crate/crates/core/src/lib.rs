#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariance;
pub mod criteria;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod krylov;
pub mod quadratures;
pub mod sparse;
pub mod sweep;

pub use error::{Error, Result};
