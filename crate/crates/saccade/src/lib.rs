//! File formats, dataset loaders and the run driver for `saccade-core`.

pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod error;
pub mod fer;
pub mod idx;
pub mod run;
pub mod tracelog;

pub use error::{Error, Result};
