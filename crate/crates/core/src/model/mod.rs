//! The denoising network: configuration, construction, forward/backward
//! passes, parameter accounting and checkpoints.

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{param_count, CleegnConfig};
pub use network::{
    ArrayRef, CleegnModel, ForwardCache, Gradients, LatentTaps, ModelOptimizer, PARAM_NAMES, RUNNING_STAT_NAMES,
};

use crate::error::Result;

/// Build a single-precision model; see [`CleegnModel::build`].
pub fn build_model(config: CleegnConfig, seed: u64) -> Result<CleegnModel<f32>> {
    CleegnModel::build(config, seed)
}
