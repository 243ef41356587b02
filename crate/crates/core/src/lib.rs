#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod driver;
pub mod error;
pub mod losses;
pub mod mechanics;
pub mod network;
pub mod optim;
pub mod sampling;
pub mod tensor;

pub use error::{Error, Result};
