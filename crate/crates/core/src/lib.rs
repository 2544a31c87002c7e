//! Continuous-time distributed optimization with passivity-based coupling over
//! switching weight-balanced digraphs.
//!
//! Each agent holds a local strongly convex objective and runs a PI-type
//! consensus flow. Local input-feedforward-passivity (IFP) indices bound the
//! admissible coupling gain.

// `!(a < b)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod dynamics;
pub mod gains;
pub mod graph;
pub mod objective;
pub mod passivity;
pub mod sim;
