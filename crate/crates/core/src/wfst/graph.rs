//! Builders for the CTC topology (T), the lexicon (L) and the full
//! T∘L∘G decoding graph.

use std::collections::{HashMap, HashSet};

use crate::inventory::{Alphabet, BLANK};
use crate::text::Prolex;

use super::compose::compose;
use super::fst::{Arc, Fst, Label, Semiring, SymbolTable, EPS};
use super::ngram::{ngram_to_fst, NGramModel};
use super::WfstError;

/// Input label of alphabet index `k` in T's input table (label 0 is epsilon).
pub fn frame_label(alphabet_index: usize) -> Label {
    alphabet_index as Label + 1
}

/// Alphabet index of a frame-level input label.
pub fn alphabet_index(label: Label) -> usize {
    debug_assert!(label != EPS);
    label as usize - 1
}

/// Output table of T / input table of L without disambiguation symbols:
/// epsilon then the non-blank units in alphabet order, so unit `k` has label `k`.
pub fn unit_table(alphabet: &Alphabet) -> SymbolTable {
    SymbolTable::from_symbols(alphabet.symbols().skip(1))
}

/// CTC topology: maps frame-level unit sequences to their collapsed form.
/// State 0 means "last frame was blank" (and is the start); state `k` means
/// "last frame was unit k". All states are final.
pub fn build_ctc_topology(alphabet: &Alphabet) -> Fst {
    let isyms = SymbolTable::from_symbols(alphabet.symbols());
    let osyms = unit_table(alphabet);
    let mut t = Fst::new(Semiring::Tropical, isyms, osyms);
    let n = alphabet.len();
    for _ in 0..n {
        let s = t.add_state();
        t.set_final(s, 0.0);
    }
    t.set_start(0);
    debug_assert_eq!(alphabet.symbol_at(0).ok(), Some(BLANK));
    for s in 0..n as u32 {
        t.add_arc(s, Arc::new(frame_label(0), EPS, 0.0, 0));
        for k in 1..n as u32 {
            let olabel = if k == s { EPS } else { k };
            t.add_arc(s, Arc::new(frame_label(k as usize), olabel, 0.0, k));
        }
    }
    t
}

/// Extends T with `#k:#k` self-loops so its output table matches a lexicon
/// input table that carries disambiguation symbols.
pub fn add_disambig_loops(t: &mut Fst, lexicon_isyms: &SymbolTable, disambig: &[Label]) {
    let mut loops = Vec::new();
    for &d in disambig {
        let sym = lexicon_isyms.symbol(d).expect("disambiguation label in table");
        let il = t.isyms.add(sym);
        let ol = t.osyms.add(sym);
        loops.push((il, ol));
    }
    for s in t.states().collect::<Vec<_>>() {
        for &(il, ol) in &loops {
            t.add_arc(s, Arc::new(il, ol, 0.0, s));
        }
    }
}

/// Lexicon transducer and the labels of its disambiguation symbols.
#[derive(Debug, Clone)]
pub struct LexiconFst {
    pub fst: Fst,
    pub disambig: Vec<Label>,
}

/// Word table covering the lexicon and, when given, the LM vocabulary.
pub fn word_table(prolex: &Prolex, lm: Option<&NGramModel>) -> SymbolTable {
    let mut words: Vec<String> = prolex.words().map(str::to_string).collect();
    if let Some(m) = lm {
        words.extend(m.word_table().symbols().iter().skip(1).cloned());
    }
    words.sort();
    words.dedup();
    SymbolTable::from_symbols(words)
}

/// Builds L: one branch per pronunciation emitting the word on its first
/// arc, disambiguation symbols after pronunciations that are homophones or
/// proper prefixes of another, and an epsilon arc back to the start.
pub fn build_lexicon_fst(
    prolex: &Prolex,
    alphabet: &Alphabet,
    words: &SymbolTable,
) -> Result<LexiconFst, WfstError> {
    if prolex.is_empty() {
        return Err(WfstError::InvalidModel("empty lexicon".into()));
    }
    let mut isyms = unit_table(alphabet);

    let mut pron_count: HashMap<&[String], usize> = HashMap::new();
    let mut prefixes: HashSet<&[String]> = HashSet::new();
    for (_, prons) in prolex.iter() {
        for p in prons {
            *pron_count.entry(&p.phones).or_insert(0) += 1;
            for k in 1..p.phones.len() {
                prefixes.insert(&p.phones[..k]);
            }
        }
    }

    // resolve every phone first so errors surface before we mutate tables
    let mut branches = Vec::new();
    let mut next_disambig: HashMap<&[String], usize> = HashMap::new();
    let mut max_disambig = 0;
    for (word, prons) in prolex.iter() {
        let wl = words
            .find(word)
            .ok_or_else(|| WfstError::InvalidModel(format!("word {word} not in word table")))?;
        for p in prons {
            let labels = p
                .phones
                .iter()
                .map(|ph| {
                    alphabet
                        .index_of(ph)
                        .map(|i| i as Label)
                        .map_err(|_| WfstError::InvalidModel(format!("{word}: unit {ph} not in alphabet")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let key: &[String] = &p.phones;
            let needs = pron_count[key] > 1 || prefixes.contains(key);
            let disambig = if needs {
                let c = next_disambig.entry(key).or_insert(0);
                *c += 1;
                max_disambig = max_disambig.max(*c);
                Some(*c)
            } else {
                None
            };
            branches.push((wl, labels, p.weight, disambig));
        }
    }
    let disambig: Vec<Label> = (1..=max_disambig)
        .map(|k| isyms.add(&format!("#{k}")))
        .collect();

    let mut l = Fst::new(Semiring::Tropical, isyms, words.clone());
    let start = l.add_state();
    l.set_start(start);
    l.set_final(start, 0.0);
    for (wl, labels, weight, dis) in branches {
        let mut s = start;
        for (i, &ph) in labels.iter().enumerate() {
            let n = l.add_state();
            let (ol, w) = if i == 0 { (wl, weight) } else { (EPS, 0.0) };
            l.add_arc(s, Arc::new(ph, ol, w, n));
            s = n;
        }
        if let Some(k) = dis {
            let n = l.add_state();
            l.add_arc(s, Arc::new(disambig[k - 1], EPS, 0.0, n));
            s = n;
        }
        l.add_arc(s, Arc::new(EPS, EPS, 0.0, start));
    }
    Ok(LexiconFst { fst: l, disambig })
}

/// Composes T∘L∘G and removes the disambiguation symbols from the input side.
pub fn build_decode_graph(
    alphabet: &Alphabet,
    prolex: &Prolex,
    lm: &NGramModel,
) -> Result<Fst, WfstError> {
    let words = word_table(prolex, Some(lm));
    let lex = build_lexicon_fst(prolex, alphabet, &words)?;
    let g = ngram_to_fst(lm, &words);
    let lg = compose(&lex.fst, &g)?;
    let mut t = build_ctc_topology(alphabet);
    add_disambig_loops(&mut t, &lex.fst.isyms, &lex.disambig);
    let mut tlg = compose(&t, &lg)?;
    let t_disambig: Vec<Label> = lex
        .disambig
        .iter()
        .filter_map(|&d| lex.fst.isyms.symbol(d).and_then(|s| tlg.isyms.find(s)))
        .collect();
    tlg.remove_input_labels(&t_disambig);
    tlg.arc_sort_input();
    Ok(tlg)
}
