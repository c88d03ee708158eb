//! A small 1-D U-Net, hand-rolled in f64: flat parameter vector plus a
//! named layout, explicit forward/backward passes, Adam, an early-stopping
//! training loop with a plateau learning-rate schedule, tiled inference
//! over long records, and a binary checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod infer;
pub mod model;
pub mod train;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use infer::fuse;
pub use model::{
    backward, forward, forward_cached, init_model, FusionModelParams, Layout, ModelConfig,
    TensorSpec, TrainingMeta,
};
pub use train::{
    train, EpochStats, TrainError, TrainOutcome, TrainSample, TrainingHyperparams,
};
