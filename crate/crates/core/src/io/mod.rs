//! File formats, synthetic data and configuration.

pub mod annotations;
pub mod config;
pub mod container;
pub mod results;
pub mod synth;

pub use annotations::{Annotation, AnnotationSet, Category, Video};
pub use config::{EngineConfig, ModelConfig};
pub use container::{ClipBoxes, ClipMeta, ClipNetOut, Container, Tensor};
pub use results::{ResultEntry, ResultsFile};
