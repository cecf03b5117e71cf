//! Synthetic multilingual worlds and desk-scale experiment orchestration on
//! top of the `phonoglot` core crate.
//!
//! * [`config`]: TOML schemas for worlds and experiments.
//! * [`world`]: deterministic world generation and its on-disk layout.
//! * [`experiment`]: monolingual, multilingual and crosslingual pipelines.
//! * [`report`]: `results.csv`, `report.json` and `history.csv`.
//! * [`study`]: the multi-experiment comparison study run per seed.

pub mod config;
pub mod experiment;
pub mod report;
pub mod study;
pub mod world;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Acoustic(#[from] phonoglot::acoustic::AcousticError),
    #[error(transparent)]
    Wfst(#[from] phonoglot::wfst::WfstError),
    #[error(transparent)]
    Text(#[from] phonoglot::text::TextError),
    #[error(transparent)]
    Bpe(#[from] phonoglot::bpe::BpeError),
    #[error(transparent)]
    Eval(#[from] phonoglot::eval::EvalError),
    #[error(transparent)]
    Inventory(#[from] phonoglot::inventory::InventoryError),
    #[error(transparent)]
    Ctc(#[from] phonoglot::ctc::CtcError),
}

pub use config::{ExperimentConfig, Mode, Scale, Supervision, WorldConfig};
pub use experiment::run_experiment;
pub use report::Report;
pub use study::{median, run_study, StudyOutcome};
pub use world::{gen_world, load_world, write_world, World};
