//! Mouse-dynamics user verification: session ingest and cleaning, action
//! segmentation, optional resampling, per-action features, per-user random
//! forests and the evaluation protocols built on them.

pub mod eval;
pub mod features;
pub mod forest;
pub mod ingest;
pub mod pipeline;
pub mod resample;
pub mod seed;
pub mod segment;
pub mod synth;

pub use eval::{EvalError, EvalParams, EvalReport, Protocol, Scenario};
pub use features::{extract_features, ActionFeatures, FeatureError};
pub use forest::{ForestError, ForestParams, RandomForest};
pub use ingest::{IngestError, MouseEvent, Session, SessionRole};
pub use pipeline::PipelineError;
pub use resample::{ResampleConfig, ResampleError, ResampleMethod};
pub use segment::{segment, ActionKind, MouseAction, SegmentConfig};

/// Any error raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
