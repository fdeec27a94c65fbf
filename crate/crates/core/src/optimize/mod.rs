//! The generation loop: per-object guidance through clipped renders, the
//! inverse-clipped preservation term against a frozen scene, and the
//! schedule around them.

pub mod checkpoint;
mod loss;
mod oracle;
mod state;
mod train;

pub use loss::reconstruction_loss;
pub use oracle::{
    FieldTargets, Guidance, GuidanceOracle, GuidanceRequest, OracleError, SphereTarget, SphereTargets,
    SyntheticDenoiserOracle, TargetSource, ZeroOracle,
};
pub use state::{freeze_scene, FreezeMode, FrozenScene, Init, SceneObject, SceneState};
pub use train::{
    frozen_region_deviation, guidance_pass, outside_box_opacity, preservation_pass, run_generation, target_loss,
    training_step, LossReport, MetricRecord, NoObserver, OptimizerConfig, RunObserver, RunSchedule,
};

use crate::field::checkpoint::CheckpointError;
use crate::field::FieldError;
use crate::layout::LayoutError;
use crate::render::RenderError;

#[derive(Debug, thiserror::Error)]
pub enum OptimizeError {
    #[error("scene is already frozen")]
    AlreadyFrozen,
    #[error("scene must be frozen before training")]
    NotFrozen,
    #[error("guidance for object {object} failed: {source}")]
    Oracle {
        object: usize,
        #[source]
        source: OracleError,
    },
    #[error("image is {got:?}, reference is {expected:?}")]
    ImageShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
