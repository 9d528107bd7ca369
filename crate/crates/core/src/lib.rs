//! Simulation of biased random walks in trapping environments: the directed
//! trap model on Z, the biased walk on a critical Galton-Watson tree
//! conditioned to survive, and the extremal process describing their
//! hitting-time limits.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod extremal;
pub mod kestentree;
pub mod limits;
pub mod logmag;
pub mod runner;
pub mod seed;
pub mod special;
pub mod svt;
pub mod trapline;
pub mod treewalk;

pub use error::{Error, Result};
pub use logmag::{LogMagnitude, LogSum};
pub use svt::TailFunction;
