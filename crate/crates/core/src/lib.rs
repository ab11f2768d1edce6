// `!(x < tol)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod cli;
pub mod data;
pub mod encoders;
pub mod fusion;
pub mod model;
pub mod numcore;
pub mod seed;
