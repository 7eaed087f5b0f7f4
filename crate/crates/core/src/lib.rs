//! Planning and analysis models for cryogenic qubit signal chains.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coherence;
pub mod data;
pub mod error;
pub mod noise;
pub mod report;
pub mod scenario;
pub mod tables;
pub mod thermal;
pub mod units;

pub use error::{Error, Result};
