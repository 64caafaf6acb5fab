//! Confidence-guided matting at desk scale.
//!
//! A base segmenter predicts logits, a confidence trimap marks the pixels it
//! is unsure about, and a refiner re-estimates only that band. This crate
//! provides every piece of that loop:
//!
//! - [`imagecore`]: map types, PNG I/O, resampling
//! - [`trimap`]: threshold-based confidence trimaps
//! - [`losses`]: structure loss and multi-scale combined loss with gradients
//! - [`metrics`]: the standard DIS evaluation suite
//! - [`autodiff`]: a small reverse-mode engine and toy base/refiner networks
//! - [`pipeline`]: base → trimap → refiner orchestration
//! - [`datasets`]: DIS-style directory scanning and synthetic scenes

pub mod error;
pub mod filter;
pub mod imagecore;
pub mod autodiff;
pub mod datasets;
pub mod losses;
pub mod metrics;
pub mod pipeline;
mod par;
pub mod training;
pub mod trimap;

pub use error::{Error, Result};
