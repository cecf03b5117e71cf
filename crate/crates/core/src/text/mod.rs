//! Text normalization, G2P transducer application and pronunciation lexicons.

mod lexicon;
mod normalize;

pub use lexicon::{
    apply_g2p, build_prolex, lexicon_stats, phonemize_corpus, LexiconStats, Phonemized,
    Prolex, Pronunciation,
};
pub use normalize::{default_strip_marks, normalize, NormRules, Normalized};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("invalid normalization rules: {0}")]
    InvalidRules(String),
    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("cannot apply G2P to an empty word")]
    EmptyWord,
    #[error(transparent)]
    Fst(#[from] crate::wfst::WfstError),
}
