//! Clip-in clip-out video instance segmentation engine.
//!
//! Turns per-clip network outputs (prototypes, per-anchor class scores,
//! embeddings, boxes and dynamic mask parameters) into tracked per-video
//! instance masks, and provides the evaluators around that pipeline.

pub mod analytics;
pub mod assembly;
pub mod cli;
pub mod error;
pub mod heads;
pub mod inference;
pub mod io;
pub mod pipeline;
pub mod primitives;
pub mod tensor;
pub mod tracking;
pub mod training;

pub use error::{Error, Result};
