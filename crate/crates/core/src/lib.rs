//! Temporal segmentation of feature sequences into action units.
//!
//! Each action unit is a strict left-to-right HMM with Gaussian-mixture
//! emissions. Units are composed under a grammar learned from training
//! transcripts and decoded jointly with token passing, which yields the
//! activity label, the unit sequence and the unit boundaries in one pass.

pub mod datamodel;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod gmm;
pub mod grammar;
pub mod hmm;
pub mod math;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
