//! Quantized distributed gradient tracking over directed graphs.
// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithms;
pub mod cli;
pub mod codec;
pub mod constants;
pub mod digraph;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod problems;
pub mod quantizer;

pub use error::{Error, Result};
