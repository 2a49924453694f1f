// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costspec;
pub mod engine;
pub mod error;
pub mod harness;
pub mod model;
pub mod plant;
pub mod qp;
pub mod trajops;

pub use error::{Error, Result};
