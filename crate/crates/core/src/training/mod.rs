//! Alternating adversarial optimisation with Adam, checkpoints and the
//! training log.

pub mod adam;
pub mod checkpoint;
pub mod log;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    load_discriminator, load_generator, load_header, load_into, save_discriminator, save_generator, CheckpointHeader,
    CheckpointMeta, Topology,
};
pub use log::{LogRecord, LOG_HEADER};
pub use trainer::{
    train_discriminator_step, train_from_manifest, train_generator_step, train_loop, validate_generator, Batch,
    BestModel, TrainConfig, TrainOutcome,
};
