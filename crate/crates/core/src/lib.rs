//! Tail asymptotics, limit laws and estimation for Kotz Type III elliptical
//! random vectors, with samplers and Monte Carlo validation.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimation;
pub mod gaussian;
pub mod harness;
pub mod io;
pub mod kotz;
pub mod limits;
pub mod linalg;
pub mod qp;
pub mod rng;
pub mod tail;

pub use error::{Error, Result};
