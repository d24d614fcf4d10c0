#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustic;
pub mod checkpoint;
pub mod criterion;
pub mod decoder;
pub mod error;
pub mod frontend;
pub mod lm;
pub mod math;
pub mod nn;
pub mod optim;
pub mod pipeline;

pub use error::{Error, Result};
