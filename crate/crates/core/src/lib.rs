//! Representativeness analysis of georeferenced case-study collections.
//!
//! Sites are placed on an equal-area global grid, compared with the cells of a chosen
//! extent through the histogram of one gridded variable, and judged against a Monte Carlo
//! null distribution of equally sized random samples.

pub mod analysis;
pub mod collections;
pub mod error;
pub mod grid;
pub mod ingest;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};

/// Version stamped into every persisted or served JSON document.
pub const SCHEMA_VERSION: u32 = 1;
