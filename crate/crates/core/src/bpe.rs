//! Language-balanced sentence sampling and byte-pair-encoding tokenizers.
//!
//! Words are segmented into characters with an end-of-word marker glued to
//! the final character (`"ab"` → `a`, `b</w>`), so merges never cross word
//! boundaries and decoding is unambiguous.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::inventory::{Alphabet, InventoryError, UnitKind};

pub const WORD_END: &str = "</w>";
pub const BPE_UNK: &str = "<unk>";
pub const BPE_BOS: &str = "<s>";
pub const DEFAULT_BETA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum BpeError {
    #[error("invalid language statistics: {0}")]
    InvalidStats(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed BPE model file: {0}")]
    Parse(String),
    #[error(transparent)]
    Inventory(#[from] InventoryError),
}

/// Per-language sentence counts `n_l` and the flattening exponent β.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageStats {
    pub counts: Vec<u64>,
    pub beta: f64,
}

impl LanguageStats {
    pub fn new(counts: Vec<u64>, beta: f64) -> Self {
        LanguageStats { counts, beta }
    }

    pub fn num_languages(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// `q_l = p_l^β / Σ_i p_i^β` with `p_l = n_l / Σ_i n_i`.
pub fn sampling_distribution(stats: &LanguageStats) -> Result<Vec<f64>, BpeError> {
    if stats.counts.is_empty() {
        return Err(BpeError::InvalidStats("no languages".into()));
    }
    if !(stats.beta > 0.0 && stats.beta <= 1.0) {
        return Err(BpeError::InvalidStats(format!(
            "beta must be in (0, 1], got {}",
            stats.beta
        )));
    }
    if stats.counts.contains(&0) {
        return Err(BpeError::InvalidStats("every language needs sentences".into()));
    }
    // p_l^β / Σ p_i^β = n_l^β / Σ n_i^β; the count form avoids rounding p
    let powered: Vec<f64> = stats
        .counts
        .iter()
        .map(|&n| (n as f64).powf(stats.beta))
        .collect();
    let z: f64 = powered.iter().sum();
    Ok(powered.into_iter().map(|x| x / z).collect())
}

/// Expected number of sampled sentences per language when drawing `total`.
pub fn expected_counts(stats: &LanguageStats, total: u64) -> Result<Vec<f64>, BpeError> {
    Ok(sampling_distribution(stats)?
        .into_iter()
        .map(|q| q * total as f64)
        .collect())
}

/// Draws `total` sentences with replacement: a language by `q`, then a
/// sentence uniformly within it. Returns `(language index, sentence)`.
pub fn sample_corpus<S: AsRef<str>>(
    corpora: &[Vec<S>],
    stats: &LanguageStats,
    total: usize,
    seed: u64,
) -> Result<Vec<(usize, String)>, BpeError> {
    if total == 0 {
        return Err(BpeError::InvalidInput("total must be positive".into()));
    }
    if corpora.len() != stats.num_languages() {
        return Err(BpeError::InvalidInput(format!(
            "{} corpora for {} languages",
            corpora.len(),
            stats.num_languages()
        )));
    }
    let q = sampling_distribution(stats)?;
    if let Some(l) = (0..q.len()).find(|&l| q[l] > 0.0 && corpora[l].is_empty()) {
        return Err(BpeError::InvalidInput(format!("corpus of language {l} is empty")));
    }
    let langs = WeightedIndex::new(&q).map_err(|e| BpeError::InvalidStats(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..total)
        .map(|_| {
            let l = langs.sample(&mut rng);
            let i = rng.random_range(0..corpora[l].len());
            (l, corpora[l][i].as_ref().to_string())
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    vocab: Alphabet,
    vocab_size: usize,
}

/// Initial segmentation of a word: one symbol per character, the last one
/// carrying the end-of-word marker.
fn split_word(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    chars
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 == chars.len() {
                format!("{c}{WORD_END}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn merge_pair(symbols: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

/// Base symbols for a character set: `c` and `c</w>` for each character.
fn base_symbols(chars: &BTreeSet<char>) -> BTreeSet<String> {
    chars
        .iter()
        .flat_map(|c| [c.to_string(), format!("{c}{WORD_END}")])
        .collect()
}

/// Number of base symbols a corpus induces (two per distinct character).
pub fn base_charset_size<S: AsRef<str>>(sentences: &[S]) -> usize {
    let chars: BTreeSet<char> = sentences
        .iter()
        .flat_map(|s| s.as_ref().chars().filter(|c| !c.is_whitespace()).collect::<Vec<_>>())
        .collect();
    2 * chars.len()
}

/// Learns merges until the vocabulary (subwords plus `<s>` and `<unk>`,
/// blank excluded) would exceed `vocab_size` or no pair occurs twice.
/// Equal-frequency pairs are resolved by the lexicographically smallest
/// `(left, right)`.
pub fn train_bpe<S: AsRef<str>>(sentences: &[S], vocab_size: usize) -> Result<BpeModel, BpeError> {
    let mut word_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for s in sentences {
        for w in s.as_ref().split_whitespace() {
            *word_freq.entry(w).or_insert(0) += 1;
        }
    }
    if word_freq.is_empty() {
        return Err(BpeError::InvalidInput("empty corpus".into()));
    }
    let chars: BTreeSet<char> = word_freq.keys().flat_map(|w| w.chars()).collect();
    let mut tokens = base_symbols(&chars);
    if vocab_size < tokens.len() + 2 {
        return Err(BpeError::InvalidInput(format!(
            "vocab_size {vocab_size} is below the {} base symbols plus 2 specials",
            tokens.len()
        )));
    }

    let mut words: Vec<(Vec<String>, usize)> = word_freq
        .into_iter()
        .map(|(w, f)| (split_word(w), f))
        .collect();
    let mut merges = Vec::new();
    while tokens.len() + 2 < vocab_size {
        let mut pair_counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (syms, f) in &words {
            for p in syms.windows(2) {
                *pair_counts.entry((&p[0], &p[1])).or_insert(0) += f;
            }
        }
        // BTreeMap iterates in lexicographic order, so the first maximum wins
        let mut best: Option<((&str, &str), usize)> = None;
        for (&p, &c) in &pair_counts {
            if best.is_none_or(|b| c > b.1) {
                best = Some((p, c));
            }
        }
        let Some(((l, r), count)) = best else { break };
        if count < 2 {
            break;
        }
        let (l, r) = (l.to_string(), r.to_string());
        for (syms, _) in words.iter_mut() {
            if syms.len() > 1 {
                *syms = merge_pair(syms, &l, &r);
            }
        }
        tokens.insert(format!("{l}{r}"));
        merges.push((l, r));
    }
    BpeModel::new(merges, tokens, vocab_size)
}

impl BpeModel {
    fn new(
        merges: Vec<(String, String)>,
        tokens: BTreeSet<String>,
        vocab_size: usize,
    ) -> Result<Self, BpeError> {
        let vocab = Alphabet::from_units(
            UnitKind::Subword,
            tokens
                .iter()
                .map(String::as_str)
                .chain([BPE_BOS, BPE_UNK]),
        )?;
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        Ok(BpeModel {
            merges,
            ranks,
            vocab,
            vocab_size,
        })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    /// Subword alphabet: blank at 0, then subwords and the two specials.
    pub fn vocab(&self) -> &Alphabet {
        &self.vocab
    }

    /// Requested vocabulary budget (subwords + specials, blank excluded).
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of tokens excluding the blank.
    pub fn num_tokens(&self) -> usize {
        self.vocab.len() - 1
    }

    fn encode_word(&self, word: &str) -> Vec<String> {
        let mut syms: Vec<String> = split_word(word)
            .into_iter()
            .map(|s| {
                if self.vocab.contains(&s) {
                    s
                } else {
                    BPE_UNK.to_string()
                }
            })
            .collect();
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, p)| {
                    self.ranks
                        .get(&(p[0].clone(), p[1].clone()))
                        .map(|&r| (r, i))
                })
                .min();
            let Some((rank, _)) = best else { break };
            let (l, r) = &self.merges[rank];
            syms = merge_pair(&syms, l, r);
        }
        syms
    }

    /// Segments a sentence; characters outside the training charset become `<unk>`.
    pub fn encode(&self, sentence: &str) -> Vec<String> {
        sentence
            .split_whitespace()
            .flat_map(|w| self.encode_word(w))
            .collect()
    }

    /// Encodes straight to alphabet indices.
    pub fn encode_ids(&self, sentence: &str) -> Vec<usize> {
        self.encode(sentence)
            .iter()
            .map(|t| self.vocab.index_of(t).expect("encode only emits vocabulary tokens"))
            .collect()
    }

    /// Concatenates tokens, turning end-of-word markers into spaces.
    pub fn decode<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        decode_tokens(tokens)
    }

    /// Model file: a header line, one merge per line, then the vocabulary.
    pub fn to_file_string(&self) -> String {
        let mut out = format!(
            "#bpe vocab_size={} marker={} merges={}\n",
            self.vocab_size,
            WORD_END,
            self.merges.len()
        );
        for (l, r) in &self.merges {
            out.push_str(&format!("{l} {r}\n"));
        }
        for s in self.vocab.symbols().skip(1) {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn from_file_string(text: &str) -> Result<Self, BpeError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| BpeError::Parse("empty file".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("#bpe") {
            return Err(BpeError::Parse("missing #bpe header".into()));
        }
        let mut vocab_size = None;
        let mut num_merges = None;
        for f in fields {
            match f.split_once('=') {
                Some(("vocab_size", v)) => vocab_size = v.parse::<usize>().ok(),
                Some(("merges", v)) => num_merges = v.parse::<usize>().ok(),
                Some(("marker", m)) if m == WORD_END => {}
                _ => return Err(BpeError::Parse(format!("bad header field {f:?}"))),
            }
        }
        let (Some(vocab_size), Some(num_merges)) = (vocab_size, num_merges) else {
            return Err(BpeError::Parse("header needs vocab_size and merges".into()));
        };
        let mut merges = Vec::with_capacity(num_merges);
        for _ in 0..num_merges {
            let line = lines
                .next()
                .ok_or_else(|| BpeError::Parse("truncated merge list".into()))?;
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| BpeError::Parse(format!("bad merge line {line:?}")))?;
            merges.push((l.to_string(), r.to_string()));
        }
        let tokens: BTreeSet<String> = lines
            .filter(|l| !l.is_empty() && *l != BPE_BOS && *l != BPE_UNK)
            .map(str::to_string)
            .collect();
        let model = BpeModel::new(merges, tokens, vocab_size)?;
        for (l, r) in &model.merges {
            if !model.vocab.contains(l) || !model.vocab.contains(r) {
                return Err(BpeError::Parse(format!("merge ({l}, {r}) uses unknown tokens")));
            }
        }
        Ok(model)
    }
}

/// Concatenates subword tokens back into words.
pub fn decode_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    let joined: String = tokens.iter().map(|t| t.as_ref()).collect();
    joined
        .replace(WORD_END, " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eq2_closed_form() {
        let q = sampling_distribution(&LanguageStats::new(vec![9, 1], 0.5)).unwrap();
        assert!((q[0] - 0.75).abs() < 1e-15);
        assert!((q[1] - 0.25).abs() < 1e-15);
        let q = sampling_distribution(&LanguageStats::new(vec![3, 1], 1.0)).unwrap();
        assert_eq!(q, vec![0.75, 0.25]);
    }

    #[test]
    fn invalid_stats() {
        assert!(sampling_distribution(&LanguageStats::new(vec![], 0.5)).is_err());
        assert!(sampling_distribution(&LanguageStats::new(vec![0, 0], 0.5)).is_err());
        assert!(sampling_distribution(&LanguageStats::new(vec![1], 0.0)).is_err());
        assert!(sampling_distribution(&LanguageStats::new(vec![1], 1.5)).is_err());
    }

    #[test]
    fn single_language_sampling() {
        let corpora = vec![vec!["x y", "z"]];
        let s = sample_corpus(&corpora, &LanguageStats::new(vec![2], 0.5), 50, 3).unwrap();
        assert_eq!(s.len(), 50);
        assert!(s.iter().all(|(l, _)| *l == 0));
        let again = sample_corpus(&corpora, &LanguageStats::new(vec![2], 0.5), 50, 3).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn empty_language_corpus_rejected() {
        let corpora: Vec<Vec<&str>> = vec![vec!["a"], vec![]];
        assert!(sample_corpus(&corpora, &LanguageStats::new(vec![1, 1], 0.5), 5, 0).is_err());
    }

    #[test]
    fn first_merge_prefers_most_frequent_pair() {
        // pairs: (a, a</w>) x2, (a, b</w>) x1
        let m = train_bpe(&["aa aa ab"], 100).unwrap();
        assert_eq!(m.merges()[0], ("a".to_string(), format!("a{WORD_END}")));
        assert_eq!(m.merges().len(), 1);
        assert_eq!(m.encode("aa"), vec![format!("aa{WORD_END}")]);
    }

    #[test]
    fn budget_exhausted_by_base() {
        let base = base_charset_size(&["aa aa ab"]);
        let m = train_bpe(&["aa aa ab"], base + 2).unwrap();
        assert!(m.merges().is_empty());
        assert_eq!(m.num_tokens(), base + 2);
        assert_eq!(m.encode("ba"), vec!["b".to_string(), format!("a{WORD_END}")]);
        assert!(train_bpe(&["aa aa ab"], base + 1).is_err());
        assert!(train_bpe::<&str>(&[], 10).is_err());
    }

    #[test]
    fn unknown_characters() {
        let m = train_bpe(&["ab ba"], 20).unwrap();
        assert_eq!(m.encode("§"), vec![BPE_UNK.to_string()]);
    }

    #[test]
    fn round_trip_and_file_format() {
        let corpus = ["the cat sat on the mat", "the hat", "a cat that sat"];
        let m = train_bpe(&corpus, 40).unwrap();
        assert!(m.num_tokens() <= 40);
        for s in corpus {
            assert_eq!(m.decode(&m.encode(s)), s);
        }
        let parsed = BpeModel::from_file_string(&m.to_file_string()).unwrap();
        assert_eq!(parsed, m);
        assert!(BpeModel::from_file_string("nonsense").is_err());
    }
}
