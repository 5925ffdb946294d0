//! Hard visual attention in pure Rust.
//!
//! The crate holds everything that is arithmetic: a small network substrate
//! (dense layers, LSTM cells, convolutions, Adam), the foveal glimpse sensor,
//! the RAM / DRAM / MRAM recurrent attention models together with a LeNet-5
//! reference classifier, REINFORCE training with learned baselines, and the
//! fixation/saccade statistics used to characterise learned gaze policies.
//!
//! It builds without `std` (it only needs `alloc`). File formats, dataset
//! loaders and the command-line driver live in the `saccade` crate.
//!
//! # Features
//! - `std` (default): runtime CPU feature detection for the matrix kernels.
//! - `serde`: `Serialize`/`Deserialize` for configuration types.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod glimpse;
pub mod models;
pub mod nn;
pub mod rng;
pub mod scanpath;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
