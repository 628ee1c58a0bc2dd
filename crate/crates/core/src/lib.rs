//! Parallel shooting SQP for nonlinear model predictive control.

pub mod error;
pub mod linearize;
pub mod models;
pub mod nlp;
pub mod qp;
pub mod shoot;
pub mod sparse;

pub use error::{Error, Result};
