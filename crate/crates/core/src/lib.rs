//! Trajectory registration for RGB-D sequences driven by coplanarity
//! constraints between planar patches, optionally combined with keypoint
//! matches.
pub mod config;
pub mod correspondence;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod extraction;
pub mod geometry;
pub mod io;
pub mod optimizer;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
