//! Multi-study ℓ2 boosting with linear and component-wise linear learners,
//! analytic merge-versus-ensemble transition points, and conditional MSE of
//! selected coefficients.

// `!(x >= 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cw_boost;
pub mod dataset;
pub mod error;
pub mod io;
pub mod linear_boost;
pub mod selective;
pub mod sim;
pub mod transition;

pub use error::{Error, Result};
