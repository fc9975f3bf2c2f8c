// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod evaluation;
pub mod exact;
pub mod graph;
pub mod heuristics;
pub mod model;
pub mod scenario;
