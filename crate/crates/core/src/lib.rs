//! Hyperspectral band selection.
//!
//! Bands are ranked by their mutual information with a class map. Two
//! selectors are provided: a filter that discards near-flat neighbours of each
//! top-ranked band, and a wrapper that keeps a band only when it lowers the
//! Fano upper bound on classification error by at least a fixed threshold.

pub mod classify;
pub mod cli;
pub mod error;
pub mod eval;
pub mod hypercube;
pub mod infotheory;
pub mod selection;

pub use error::{Error, Result};
