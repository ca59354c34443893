//! Object discovery by change detection between two sets of RGBD frames.

// Negated float comparisons send NaN down the error path on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod clustering;
pub mod differencing;
pub mod edges;
pub mod filtering;
pub mod geometry;
pub mod grid;
pub mod inference;
pub mod maxflow;
pub mod pipeline;
pub mod sie;
