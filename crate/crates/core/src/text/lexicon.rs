use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::inventory::LanguageInventory;
use crate::wfst::{Fst, Label, StateId};

use super::{NormRules, TextError};

/// One pronunciation of a word with its (tropical) cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Pronunciation {
    pub phones: Vec<String>,
    pub weight: f64,
}

/// Pronunciation lexicon: word → pronunciations sorted best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prolex {
    entries: BTreeMap<String, Vec<Pronunciation>>,
}

impl Prolex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pronunciation; exact duplicates are ignored.
    pub fn insert(&mut self, word: &str, phones: Vec<String>, weight: f64) -> Result<(), TextError> {
        if phones.is_empty() {
            return Err(TextError::InvalidLexicon(format!("{word}: empty pronunciation")));
        }
        if !weight.is_finite() {
            return Err(TextError::InvalidLexicon(format!("{word}: non-finite weight")));
        }
        let prons = self.entries.entry(word.to_string()).or_default();
        if prons.iter().any(|p| p.phones == phones) {
            return Ok(());
        }
        prons.push(Pronunciation { phones, weight });
        prons.sort_by(|a, b| a.weight.total_cmp(&b.weight));
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&[Pronunciation]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn best(&self, word: &str) -> Option<&Pronunciation> {
        self.entries.get(word).and_then(|p| p.first())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Pronunciation])> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p.as_slice()))
    }

    /// Checks that every phoneme belongs to the language inventory.
    pub fn validate(&self, inventory: &LanguageInventory) -> Result<(), TextError> {
        for (w, prons) in &self.entries {
            for p in prons {
                if let Some(ph) = p.phones.iter().find(|ph| !inventory.contains(ph)) {
                    return Err(TextError::InvalidLexicon(format!(
                        "{w}: phoneme {ph} not in inventory {}",
                        inventory.language_code
                    )));
                }
            }
        }
        Ok(())
    }

    /// TSV: `word<TAB>p1 p2 ...[<TAB>weight]`, one pronunciation per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (w, prons) in &self.entries {
            for p in prons {
                out.push_str(w);
                out.push('\t');
                out.push_str(&p.phones.join(" "));
                if p.weight != 0.0 {
                    out.push('\t');
                    out.push_str(&p.weight.to_string());
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Prolex, TextError> {
        let mut lex = Prolex::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let err = || TextError::InvalidLexicon(format!("line {}: {line:?}", n + 1));
            let (word, phones, weight) = match fields.as_slice() {
                [w, p] => (*w, *p, 0.0),
                [w, p, wt] => (*w, *p, wt.trim().parse().map_err(|_| err())?),
                _ => return Err(err()),
            };
            let phones: Vec<String> = phones.split_whitespace().map(str::to_string).collect();
            lex.insert(word.trim(), phones, weight)?;
        }
        Ok(lex)
    }
}

#[derive(Debug)]
struct SearchItem {
    cost: f64,
    order: u64,
    state: StateId,
    pos: usize,
    outputs: Vec<Label>,
    complete: bool,
}

impl PartialEq for SearchItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for SearchItem {}
impl PartialOrd for SearchItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SearchItem {
    // min-heap on (cost, insertion order)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.order.cmp(&self.order))
    }
}

/// Upper bound on search pops per word, guarding against epsilon cycles.
const MAX_G2P_POPS: usize = 200_000;

/// Applies a grapheme-to-phoneme transducer to one word and returns up to
/// `nbest` distinct pronunciations, cheapest first. Arc weights are costs and
/// must be non-negative. Diacritics listed in `rules.strip_marks` are removed
/// from the output phonemes.
pub fn apply_g2p(
    g2p: &Fst,
    word: &str,
    nbest: usize,
    rules: &NormRules,
) -> Result<Vec<(Vec<String>, f64)>, TextError> {
    g2p.validate()?;
    if word.is_empty() {
        return Err(TextError::EmptyWord);
    }
    let Some(start) = g2p.start() else {
        return Ok(Vec::new());
    };
    let mut graphemes = Vec::new();
    for c in word.chars() {
        match g2p.isyms.find(c.encode_utf8(&mut [0u8; 4])) {
            Some(l) => graphemes.push(l),
            None => return Ok(Vec::new()),
        }
    }

    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    heap.push(SearchItem {
        cost: 0.0,
        order,
        state: start,
        pos: 0,
        outputs: Vec::new(),
        complete: false,
    });
    let mut results: Vec<(Vec<String>, f64)> = Vec::new();
    let mut pops = 0;
    while let Some(item) = heap.pop() {
        pops += 1;
        if pops > MAX_G2P_POPS || results.len() >= nbest {
            break;
        }
        if item.complete {
            let phones: Vec<String> = item
                .outputs
                .iter()
                .filter_map(|&l| g2p.osyms.symbol(l))
                .map(|s| rules.strip(s))
                .filter(|s| !s.is_empty())
                .collect();
            if !phones.is_empty() && !results.iter().any(|(p, _)| *p == phones) {
                results.push((phones, item.cost));
            }
            continue;
        }
        if item.pos == graphemes.len() {
            if let Some(f) = g2p.final_weight(item.state) {
                order += 1;
                heap.push(SearchItem {
                    cost: item.cost + f,
                    order,
                    complete: true,
                    outputs: item.outputs.clone(),
                    ..item
                });
            }
        }
        for arc in g2p.arcs(item.state) {
            let advance = if arc.ilabel == 0 {
                0
            } else if item.pos < graphemes.len() && arc.ilabel == graphemes[item.pos] {
                1
            } else {
                continue;
            };
            let mut outputs = item.outputs.clone();
            if arc.olabel != 0 {
                outputs.push(arc.olabel);
            }
            order += 1;
            heap.push(SearchItem {
                cost: item.cost + arc.weight,
                order,
                state: arc.next,
                pos: item.pos + advance,
                outputs,
                complete: false,
            });
        }
    }
    Ok(results)
}

/// Builds a lexicon by running G2P over every distinct word. Returns the
/// lexicon and the words that had no pronunciation.
pub fn build_prolex<S: AsRef<str>>(
    words: &[S],
    g2p: &Fst,
    nbest: usize,
    rules: &NormRules,
) -> Result<(Prolex, Vec<String>), TextError> {
    let mut lex = Prolex::new();
    let mut missing = Vec::new();
    let mut done = std::collections::HashSet::new();
    for w in words {
        let w = w.as_ref();
        if !done.insert(w.to_string()) {
            continue;
        }
        let prons = apply_g2p(g2p, w, nbest, rules)?;
        if prons.is_empty() {
            missing.push(w.to_string());
            continue;
        }
        for (phones, weight) in prons {
            lex.insert(w, phones, weight)?;
        }
    }
    if lex.is_empty() {
        return Err(TextError::EmptyLexicon);
    }
    Ok((lex, missing))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconStats {
    pub homophone_rate: f64,
    pub entries: usize,
    pub avg_prons_per_word: f64,
}

/// Homophone rate counts words whose best pronunciation is shared with at
/// least one other word.
pub fn lexicon_stats(lex: &Prolex) -> Result<LexiconStats, TextError> {
    if lex.is_empty() {
        return Err(TextError::EmptyLexicon);
    }
    let mut by_pron: HashMap<&[String], usize> = HashMap::new();
    let mut total_prons = 0;
    for (_, prons) in lex.iter() {
        total_prons += prons.len();
        *by_pron.entry(&prons[0].phones).or_insert(0) += 1;
    }
    let shared = lex
        .iter()
        .filter(|(_, prons)| by_pron[prons[0].phones.as_slice()] > 1)
        .count();
    Ok(LexiconStats {
        homophone_rate: shared as f64 / lex.len() as f64,
        entries: lex.len(),
        avg_prons_per_word: total_prons as f64 / lex.len() as f64,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Phonemized {
    /// Phoneme sequences of the sentences that could be phonemized.
    pub sequences: Vec<Vec<String>>,
    /// Input indices of those sentences.
    pub kept: Vec<usize>,
    /// Input indices of sentences with at least one word missing from the lexicon.
    pub skipped: Vec<usize>,
}

/// Concatenates the best pronunciation of every word of every sentence.
pub fn phonemize_corpus<S: AsRef<str>>(sentences: &[S], lex: &Prolex) -> Phonemized {
    let mut out = Phonemized::default();
    'sentences: for (i, s) in sentences.iter().enumerate() {
        let mut seq = Vec::new();
        for w in s.as_ref().split_whitespace() {
            match lex.best(w) {
                Some(p) => seq.extend(p.phones.iter().cloned()),
                None => {
                    out.skipped.push(i);
                    continue 'sentences;
                }
            }
        }
        out.sequences.push(seq);
        out.kept.push(i);
    }
    if !out.skipped.is_empty() {
        log::info!("phonemize: skipped {} sentences with OOV words", out.skipped.len());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wfst::{Arc, Semiring, SymbolTable};

    /// a:x, b:y in sequence.
    fn toy_g2p() -> Fst {
        let mut f = Fst::new(
            Semiring::Tropical,
            SymbolTable::from_symbols(["a", "b"]),
            SymbolTable::from_symbols(["x", "y"]),
        );
        let s: Vec<_> = (0..3).map(|_| f.add_state()).collect();
        f.set_start(s[0]);
        f.add_arc(s[0], Arc::new(1, 1, 0.25, s[1]));
        f.add_arc(s[1], Arc::new(2, 2, 0.5, s[2]));
        f.set_final(s[2], 0.0);
        f
    }

    fn two_path_g2p() -> Fst {
        let mut f = Fst::new(
            Semiring::Tropical,
            SymbolTable::from_symbols(["a"]),
            SymbolTable::from_symbols(["x", "z"]),
        );
        let (s0, s1) = (f.add_state(), f.add_state());
        f.set_start(s0);
        f.add_arc(s0, Arc::new(1, 2, 0.9, s1));
        f.add_arc(s0, Arc::new(1, 1, 0.1, s1));
        f.set_final(s1, 0.0);
        f
    }

    #[test]
    fn single_path() {
        let r = NormRules::default();
        let out = apply_g2p(&toy_g2p(), "ab", 5, &r).unwrap();
        assert_eq!(out, vec![(vec!["x".to_string(), "y".to_string()], 0.75)]);
    }

    #[test]
    fn nbest_ordering() {
        let r = NormRules::default();
        let one = apply_g2p(&two_path_g2p(), "a", 1, &r).unwrap();
        assert_eq!(one, vec![(vec!["x".to_string()], 0.1)]);
        let both = apply_g2p(&two_path_g2p(), "a", 5, &r).unwrap();
        assert_eq!(both.len(), 2);
        assert!(both[0].1 <= both[1].1);
    }

    #[test]
    fn unknown_grapheme_yields_nothing() {
        let r = NormRules::default();
        assert!(apply_g2p(&toy_g2p(), "ac", 3, &r).unwrap().is_empty());
        assert!(apply_g2p(&toy_g2p(), "", 3, &r).is_err());
    }

    #[test]
    fn malformed_fst_is_structural_error() {
        let mut f = toy_g2p();
        f.add_arc(0, Arc::new(1, 1, 0.0, 42));
        assert!(matches!(
            apply_g2p(&f, "ab", 1, &NormRules::default()),
            Err(TextError::Fst(_))
        ));
    }

    #[test]
    fn prolex_construction() {
        let r = NormRules::default();
        let (lex, missing) = build_prolex(&["ab", "ab", "zz"], &toy_g2p(), 1, &r).unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.best("ab").unwrap().phones, vec!["x", "y"]);
        assert_eq!(missing, vec!["zz"]);
        assert!(matches!(
            build_prolex(&["zz"], &toy_g2p(), 1, &r),
            Err(TextError::EmptyLexicon)
        ));
    }

    #[test]
    fn homophone_rate() {
        let mut lex = Prolex::new();
        lex.insert("a", vec!["x".into()], 0.0).unwrap();
        lex.insert("b", vec!["x".into()], 0.0).unwrap();
        lex.insert("c", vec!["y".into()], 0.0).unwrap();
        let s = lexicon_stats(&lex).unwrap();
        assert!((s.homophone_rate - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.entries, 3);

        let mut distinct = Prolex::new();
        distinct.insert("a", vec!["x".into()], 0.0).unwrap();
        distinct.insert("b", vec!["y".into()], 0.0).unwrap();
        assert_eq!(lexicon_stats(&distinct).unwrap().homophone_rate, 0.0);
        assert!(lexicon_stats(&Prolex::new()).is_err());
    }

    #[test]
    fn phonemize() {
        let mut lex = Prolex::new();
        lex.insert("ab", vec!["x".into(), "y".into()], 0.0).unwrap();
        let out = phonemize_corpus(&["ab ab", "ab qq"], &lex);
        assert_eq!(out.sequences, vec![vec!["x", "y", "x", "y"]]);
        assert_eq!(out.skipped, vec![1]);
        let none: [&str; 0] = [];
        assert!(phonemize_corpus(&none, &lex).sequences.is_empty());
    }

    #[test]
    fn tsv_round_trip() {
        let mut lex = Prolex::new();
        lex.insert("ab", vec!["x".into(), "y".into()], 0.0).unwrap();
        lex.insert("ab", vec!["x".into()], 1.5).unwrap();
        lex.insert("c", vec!["tʃ".into()], 0.0).unwrap();
        let back = Prolex::from_tsv(&lex.to_tsv()).unwrap();
        assert_eq!(back, lex);
        assert!(Prolex::from_tsv("word").is_err());
    }
}
