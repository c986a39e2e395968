//! # boltwave
//!
//! Turns raw acoustic-emission (AE) streams recorded on a vibrating bolted
//! structure into wavelet scalogram datasets, and trains/evaluates ordinal
//! classifiers of the bolt tightening level.
//!
//! The pipeline, one module per stage:
//!
//! ```text
//! ingest -> denoise -> segmentation -> cwt (+ scalogram image) -> experiments
//!                                                   |                |
//!                                                trainer <- losses, schedule, optim
//!                                                   |
//!                                                metrics
//! ```
//!
//! Tightening levels are ordered classes `1..=K` (class 1 is the tightest,
//! 60 cNm, class 7 the loosest, 5 cNm). Everything that touches labels uses
//! these 1-based class indices.

pub mod cwt;
pub mod dataset;
pub mod denoise;
pub mod error;
pub mod experiments;
pub mod image;
pub mod ingest;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod schedule;
pub mod segmentation;
pub mod trainer;

pub use error::{Error, Result};

/// Number of tightening levels in the benchmark.
pub const DEFAULT_CLASSES: usize = 7;

/// Tightening torque (cNm) of each class, index 0 is class 1.
pub const CLASS_TORQUE_CNM: [u32; 7] = [60, 50, 40, 30, 20, 10, 5];
