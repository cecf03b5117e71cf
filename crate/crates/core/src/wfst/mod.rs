//! Weighted finite-state transducers and everything built on them: the CTC
//! topology, lexicon and grammar builders, composition, n-gram language
//! models and Viterbi decoding over the composed graph.

mod compose;
mod decode;
mod fst;
mod graph;
mod ngram;

pub use compose::compose;
pub use decode::{decode, DecodeDiagnostics, DecodeOptions, DecodeResult};
pub use fst::{Arc, Fst, Label, Semiring, StateId, SymbolTable, EPS, EPS_SYMBOL};
pub use graph::{
    add_disambig_loops, alphabet_index, build_ctc_topology, build_decode_graph,
    build_lexicon_fst, frame_label, unit_table, word_table, LexiconFst,
};
pub use ngram::{
    canonical_path_cost, ngram_to_fst, train_ngram, NGramEntry, NGramModel, Smoothing, BOS,
    EOS, UNK,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WfstError {
    #[error("malformed FST: {0}")]
    Structure(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("output symbol table of the left machine differs from the input table of the right")]
    SymbolTableMismatch,
    #[error("semirings differ")]
    SemiringMismatch,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("decoding failed: {0}")]
    DecodeFailure(DecodeDiagnostics),
}
