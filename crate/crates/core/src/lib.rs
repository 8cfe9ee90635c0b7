//! Predicting five-band EQ gains from timbral features of processed audio:
//! note synthesis, the EQ cascade, feature extraction, dataset generation,
//! regressors and the experiment harness.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod dataset;
pub mod eq;
pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
