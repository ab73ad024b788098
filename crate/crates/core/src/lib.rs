#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod document;
pub mod error;
mod linalg;
pub mod methods;
pub mod model;
pub mod mortality;
pub mod oec;
mod par;
pub mod simulation;
pub mod stacking;
pub mod tuning;

pub use error::{Error, Result};
