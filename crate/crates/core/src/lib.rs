// negated comparisons reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::cloned_ref_to_slice_refs))]

pub mod distill;
pub mod error;
pub mod eval;
pub mod extract;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod labels;
pub mod numeric;
pub mod pipeline;
pub mod selsa;
pub mod stabilize;
pub mod synth;
pub mod tensor_io;
pub mod videocut;

pub use error::{Error, Result};
