//! The acoustic model: a small strided-convolution + feed-forward encoder,
//! the softmax output layer whose weight rows double as unit embeddings,
//! CTC training and crosslingual transfer.

mod checkpoint;
mod config;
mod model;
mod train;

pub use checkpoint::{
    forward, load_features, read_features, save_features, write_features, CheckpointMeta,
    FeatureMatrix, ModelCheckpoint,
};
pub use config::{EncoderConfig, TrainSchedule};
pub use model::{embedding_init_std, output_logits, output_posteriors, Block, Params};
pub use train::{
    embeddings_to_tsv, evaluate_loss, export_embeddings, train, transfer_init, union_alphabet,
    EpochStats, History, InitMode, Utterance,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AcousticError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no usable utterances")]
    EmptyCorpus,
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Ctc(#[from] crate::ctc::CtcError),
    #[error(transparent)]
    Inventory(#[from] crate::inventory::InventoryError),
}
