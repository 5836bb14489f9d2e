//! Radar and camera fusion building blocks for two-stage object detection.

pub mod anchors;
pub mod error;
pub mod featblocks;
pub mod geometry;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod roialign;
pub mod rpn_targets;
pub mod scene_io;

pub use error::Error;
