//! Multi-source transfer learning for linear regression with pretrained
//! min-norm predictors: estimators, debiasing, asymptotic theory and a
//! seeded Monte-Carlo harness.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod debias;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod stats;
pub mod taskmodel;
pub mod theory;
pub mod tol;

pub use error::{Error, Result};
