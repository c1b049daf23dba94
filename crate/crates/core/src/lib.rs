#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod gas;
pub mod potential;
pub mod reference;
pub mod shapes;

pub use error::{BubbleError, Result};
