//! Pairwise comparison network: one weight-shared encoder maps each chip to a
//! 128-d embedding, the embedding difference goes through a two-layer MLP, and
//! a sigmoid turns the logit into the probability that the first chip shows
//! the fuller lot.

mod checkpoint;
mod input;
mod layers;
mod model;
mod train;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry, MANIFEST_FILE, WEIGHTS_FILE,
};
pub use input::prepare_input;
pub use model::{
    bce_from_logit, bce_loss, predict_label, symmetrize, Activation, EncoderConfig, PairNet,
    PairNetConfig, PairScore, TensorSpec, EMBEDDING_DIM, LOGIT_CLAMP,
};
pub use train::{mean_loss, train, Adam, EpochLog, PairSet, TrainConfig, TrainHistory};

/// Default decision threshold on the pair probability.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
