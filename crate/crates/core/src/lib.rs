// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod baseline;
pub mod bench;
pub mod cli;
pub mod constraints;
pub mod environment;
pub mod error;
pub mod ik;
pub mod meter;
pub mod model;
pub mod planner;
pub mod replay;
pub mod scenario;
pub mod sim;
pub mod timing;
pub mod trajgen;

pub use error::{Error, Result};
