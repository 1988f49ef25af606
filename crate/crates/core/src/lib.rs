//! Language-grounded landmark SLAM for object-centric instruction following.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod association;
pub mod eval;
pub mod factor_graph;
pub mod http;
pub mod inferred;
pub mod instruction;
pub mod policy;
pub mod runtime;
pub mod se2;
pub mod sim;
