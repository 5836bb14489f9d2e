use std::path::PathBuf;

use thiserror::Error;

use crate::featblocks::Shape;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid box {0:?}: need finite x1 <= x2 and y1 <= y2")]
    InvalidBox([f64; 4]),
    #[error("projection matrix contains non-finite entries")]
    NonFiniteProjection,
    #[error("point {index} maps to zero homogeneous scale")]
    DegenerateProjection { index: usize },
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Parse(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("scene `{scene_id}`: {reason}")]
    Invariant { scene_id: String, reason: String },
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error("invalid anchor spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("invalid assignment config: {0}")]
    InvalidConfig(String),
    #[error("cannot sample targets from an empty anchor set")]
    InsufficientAnchors,
}

#[derive(Debug, Error)]
pub enum FeatError {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("weight file: {0}")]
    Weights(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("scene `{scene_id}`: {source}")]
    Scene {
        scene_id: String,
        #[source]
        source: Box<Error>,
    },
}

/// Umbrella error for code that crosses module boundaries.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Feat(#[from] FeatError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
