//! Shared-latent translation model: two VAEs whose deepest encoder stage and
//! first generator stage are shared, two patch discriminators, the weighted
//! objective, alternating training and checkpoints.

mod checkpoint;
mod config;
mod loss;
mod net;
mod train;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, StoredConfig, FORMAT_VERSION,
    MAGIC,
};
pub use config::{Lambdas, ModelConfig, TrainSettings, SUPPORTED_SIZES};
pub use loss::{
    compute_loss, objective_inputs, DiscriminatorObjective, GeneratorObjective, LossBreakdown,
    TranslationPass,
};
pub use net::{
    images_to_tensor, tensor_to_images, Conv, Direction, Discriminator, Domain, Encoder,
    Generator, Noise, ResBlock, UnitModel,
};
pub use train::{train, write_trace, TraceRow, Trainer, TrainingSet, TRACE_HEADER};

use crate::numeric::NumericError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("unsupported image size {0}; expected one of {SUPPORTED_SIZES:?}")]
    UnsupportedSize(u32),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("image is {width}x{height}, model expects {expected}x{expected}")]
    ImageSize {
        expected: u32,
        width: u32,
        height: u32,
    },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("non-finite {term} at step {step}")]
    NonFinite { step: u64, term: String },
}
