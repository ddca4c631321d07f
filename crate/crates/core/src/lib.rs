#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data_io;
pub mod dsp;
pub mod ecod;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
