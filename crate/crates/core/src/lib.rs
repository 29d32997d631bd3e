//! Anchor cascade face detection.
//!
//! A small anchor proposal network (APN) is run fully convolutionally over a
//! coarse image pyramid whose step spans all of its anchors. Candidates from
//! overlapping context templates are merged by max-score NMS, then refined by
//! larger patch classifiers that reuse the winning template's context.

pub mod bench;
pub mod cascade;
pub mod config;
pub mod error;
pub mod eval;
pub mod formats;
pub mod geometry;
pub mod nn;
pub mod pyramid;
pub mod train;

pub use error::{Error, Result};
