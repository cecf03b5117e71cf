//! Word n-gram language models with Witten-Bell backoff, ARPA I/O and
//! conversion to a backoff acceptor.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::fst::{Arc, Fst, Semiring, StateId, SymbolTable, EPS};
use super::WfstError;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// log10 value written for the unpredictable sentence-start unigram.
const BOS_LOG10_PROB: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramEntry {
    pub log10_prob: f64,
    pub log10_backoff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    #[default]
    WittenBell,
}

/// Backoff n-gram model. `entries[k]` holds the (k+1)-grams.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab: Vec<String>,
    word_index: HashMap<String, u32>,
    entries: Vec<HashMap<Vec<u32>, NGramEntry>>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary including `<s>`, `</s>` and `<unk>`.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn entries(&self, n: usize) -> &HashMap<Vec<u32>, NGramEntry> {
        &self.entries[n - 1]
    }

    pub fn word_id(&self, w: &str) -> Option<u32> {
        self.word_index.get(w).copied()
    }

    fn id_or_unk(&self, w: &str) -> u32 {
        self.word_id(w).unwrap_or_else(|| self.word_index[UNK])
    }

    pub fn entry(&self, ngram: &[u32]) -> Option<&NGramEntry> {
        if ngram.is_empty() || ngram.len() > self.order {
            return None;
        }
        self.entries[ngram.len() - 1].get(ngram)
    }

    /// Word table for decode graphs: epsilon, then every vocabulary word
    /// except the sentence boundary markers.
    pub fn word_table(&self) -> SymbolTable {
        SymbolTable::from_symbols(self.vocab.iter().filter(|w| *w != BOS && *w != EOS))
    }

    /// Backoff probability `log10 P(word | history)`; the history is
    /// truncated to the model order.
    pub fn log10_prob_ids(&self, history: &[u32], word: u32) -> f64 {
        let keep = history.len().min(self.order - 1);
        let mut h = &history[history.len() - keep..];
        let mut acc = 0.0;
        loop {
            let mut key = h.to_vec();
            key.push(word);
            if let Some(e) = self.entry(&key) {
                return acc + e.log10_prob;
            }
            if h.is_empty() {
                // every word id, including <unk>, has a unigram entry
                unreachable!("word id {word} has no unigram entry");
            }
            if let Some(bo) = self.entry(h).and_then(|e| e.log10_backoff) {
                acc += bo;
            }
            h = &h[1..];
        }
    }

    pub fn log10_prob(&self, history: &[&str], word: &str) -> f64 {
        let h: Vec<u32> = history.iter().map(|w| self.id_or_unk(w)).collect();
        self.log10_prob_ids(&h, self.id_or_unk(word))
    }

    /// `log10 P(sentence)` including the end-of-sentence event. OOV words map to `<unk>`.
    pub fn sentence_log10_prob<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        let mut hist = vec![self.word_index[BOS]];
        let mut total = 0.0;
        for w in words {
            let id = self.id_or_unk(w.as_ref());
            total += self.log10_prob_ids(&hist, id);
            hist.push(id);
        }
        total + self.log10_prob_ids(&hist, self.word_index[EOS])
    }

    /// Sentence cost `-ln P(sentence)`, the scale used by decode graphs.
    pub fn sentence_cost<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        -self.sentence_log10_prob(words) * std::f64::consts::LN_10
    }

    /// Distribution over all predictable words given a history, expanded
    /// through backoff (for normalisation checks).
    pub fn conditional(&self, history: &[&str]) -> Vec<(String, f64)> {
        let h: Vec<u32> = history.iter().map(|w| self.id_or_unk(w)).collect();
        self.vocab
            .iter()
            .enumerate()
            .filter(|(_, w)| *w != BOS)
            .map(|(i, w)| (w.clone(), 10f64.powf(self.log10_prob_ids(&h, i as u32))))
            .collect()
    }

    /// All histories that occur as contexts of some entry.
    pub fn contexts(&self) -> Vec<Vec<String>> {
        let mut out = vec![Vec::new()];
        for n in 1..self.order {
            let mut ctx: Vec<Vec<String>> = self.entries[n - 1]
                .iter()
                .filter(|(_, e)| e.log10_backoff.is_some())
                .map(|(k, _)| k.iter().map(|&i| self.vocab[i as usize].clone()).collect())
                .collect();
            ctx.sort();
            out.extend(ctx);
        }
        out
    }

    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for n in 1..=self.order {
            writeln!(out, "ngram {n}={}", self.entries[n - 1].len()).unwrap();
        }
        for n in 1..=self.order {
            writeln!(out, "\n\\{n}-grams:").unwrap();
            let mut rows: Vec<(String, &NGramEntry)> = self.entries[n - 1]
                .iter()
                .map(|(k, e)| {
                    let words: Vec<&str> = k.iter().map(|&i| self.vocab[i as usize].as_str()).collect();
                    (words.join(" "), e)
                })
                .collect();
            rows.sort_by(|a, b| a.0.cmp(&b.0));
            for (words, e) in rows {
                match e.log10_backoff {
                    Some(bo) => writeln!(out, "{}\t{words}\t{bo}", e.log10_prob).unwrap(),
                    None => writeln!(out, "{}\t{words}", e.log10_prob).unwrap(),
                }
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }

    pub fn from_arpa(text: &str) -> Result<NGramModel, WfstError> {
        let mut order = 0usize;
        let mut section: Option<usize> = None;
        let mut raw: Vec<Vec<(Vec<String>, NGramEntry)>> = Vec::new();
        let mut seen_data = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| WfstError::Parse(format!("arpa line {}: {m}", lineno + 1));
            if line == "\\data\\" {
                seen_data = true;
                continue;
            }
            if line == "\\end\\" {
                break;
            }
            if let Some(rest) = line.strip_prefix("ngram ") {
                let (n, _) = rest.split_once('=').ok_or_else(|| err("bad ngram count"))?;
                let n: usize = n.trim().parse().map_err(|_| err("bad order"))?;
                order = order.max(n);
                continue;
            }
            if line.starts_with('\\') && line.ends_with("-grams:") {
                let n: usize = line[1..line.len() - 7]
                    .parse()
                    .map_err(|_| err("bad section header"))?;
                if n == 0 || n > order {
                    return Err(err("section order exceeds header"));
                }
                section = Some(n);
                continue;
            }
            let n = section.ok_or_else(|| err("entry outside a section"))?;
            if raw.len() < order {
                raw.resize(order, Vec::new());
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != n + 1 && fields.len() != n + 2 {
                return Err(err("wrong field count"));
            }
            let p: f64 = fields[0].parse().map_err(|_| err("bad probability"))?;
            let bo = if fields.len() == n + 2 {
                Some(fields[n + 1].parse::<f64>().map_err(|_| err("bad backoff"))?)
            } else {
                None
            };
            raw[n - 1].push((
                fields[1..=n].iter().map(|s| s.to_string()).collect(),
                NGramEntry {
                    log10_prob: p,
                    log10_backoff: bo,
                },
            ));
        }
        if !seen_data || order == 0 {
            return Err(WfstError::Parse("missing \\data\\ header".into()));
        }
        let mut vocab: Vec<String> = raw[0].iter().map(|(k, _)| k[0].clone()).collect();
        vocab.sort();
        for special in [BOS, EOS, UNK] {
            if !vocab.iter().any(|w| w == special) {
                return Err(WfstError::Parse(format!("vocabulary lacks {special}")));
            }
        }
        let word_index: HashMap<String, u32> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        let mut entries = vec![HashMap::new(); order];
        for (n, rows) in raw.into_iter().enumerate() {
            for (words, e) in rows {
                let key = words
                    .iter()
                    .map(|w| {
                        word_index.get(w).copied().ok_or_else(|| {
                            WfstError::Parse(format!("{}-gram uses unknown word {w}", n + 1))
                        })
                    })
                    .collect::<Result<Vec<u32>, _>>()?;
                entries[n].insert(key, e);
            }
        }
        let model = NGramModel {
            order,
            vocab,
            word_index,
            entries,
        };
        model.check_contexts()?;
        Ok(model)
    }

    fn check_contexts(&self) -> Result<(), WfstError> {
        for n in 2..=self.order {
            for key in self.entries[n - 1].keys() {
                if self.entry(&key[..n - 1]).is_none() {
                    return Err(WfstError::Parse(format!(
                        "context of {}-gram has no entry",
                        n
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Trains a Witten-Bell backoff model. Every sentence is padded with
/// `<s>` / `</s>`; unseen words receive the unigram escape mass via `<unk>`.
pub fn train_ngram<S: AsRef<str>>(
    sentences: &[Vec<S>],
    order: usize,
    _smoothing: Smoothing,
) -> Result<NGramModel, WfstError> {
    if order == 0 {
        return Err(WfstError::InvalidModel("order must be positive".into()));
    }
    if sentences.is_empty() {
        return Err(WfstError::InvalidModel("empty training corpus".into()));
    }

    let mut vocab: Vec<String> = sentences
        .iter()
        .flat_map(|s| s.iter().map(|w| w.as_ref().to_string()))
        .chain([BOS.to_string(), EOS.to_string(), UNK.to_string()])
        .collect();
    vocab.sort();
    vocab.dedup();
    let word_index: HashMap<String, u32> = vocab
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i as u32))
        .collect();
    let bos = word_index[BOS];
    let eos = word_index[EOS];
    let unk = word_index[UNK];

    // counts[n-1][ngram], ordered maps keep training deterministic
    let mut counts: Vec<BTreeMap<Vec<u32>, u64>> = vec![BTreeMap::new(); order];
    for s in sentences {
        let mut toks = vec![bos];
        toks.extend(s.iter().map(|w| word_index[w.as_ref()]));
        toks.push(eos);
        for i in 1..toks.len() {
            for n in 1..=order.min(i + 1) {
                *counts[n - 1].entry(toks[i + 1 - n..=i].to_vec()).or_insert(0) += 1;
            }
        }
    }

    let mut entries: Vec<HashMap<Vec<u32>, NGramEntry>> = vec![HashMap::new(); order];

    // unigrams
    let total: u64 = counts[0].values().sum();
    let types = counts[0].len() as f64;
    let denom = total as f64 + types;
    for (k, &c) in &counts[0] {
        let extra = if k[0] == unk { types } else { 0.0 };
        entries[0].insert(
            k.clone(),
            NGramEntry {
                log10_prob: ((c as f64 + extra) / denom).log10(),
                log10_backoff: None,
            },
        );
    }
    entries[0].entry(vec![unk]).or_insert(NGramEntry {
        log10_prob: (types / denom).log10(),
        log10_backoff: None,
    });
    entries[0].insert(
        vec![bos],
        NGramEntry {
            log10_prob: BOS_LOG10_PROB,
            log10_backoff: None,
        },
    );

    // higher orders, then backoff weights for their contexts
    for n in 2..=order {
        let mut by_ctx: BTreeMap<Vec<u32>, Vec<(u32, u64)>> = BTreeMap::new();
        for (k, &c) in &counts[n - 1] {
            by_ctx
                .entry(k[..n - 1].to_vec())
                .or_default()
                .push((k[n - 1], c));
        }
        let mut new_entries = HashMap::new();
        let mut backoffs = Vec::new();
        for (ctx, followers) in &by_ctx {
            let c_h: u64 = followers.iter().map(|(_, c)| c).sum();
            let t_h = followers.len() as f64;
            let denom = c_h as f64 + t_h;
            let mut lower_seen = 0.0;
            for &(w, c) in followers {
                let mut key = ctx.clone();
                key.push(w);
                new_entries.insert(
                    key,
                    NGramEntry {
                        log10_prob: (c as f64 / denom).log10(),
                        log10_backoff: None,
                    },
                );
                lower_seen += 10f64.powf(lower_log10_prob(&entries, &ctx[1..], w));
            }
            let escape = t_h / denom;
            let bow = escape / (1.0 - lower_seen);
            backoffs.push((ctx.clone(), bow.log10()));
        }
        for (ctx, bo) in backoffs {
            let e = entries[n - 2]
                .get_mut(&ctx)
                .expect("context of an observed n-gram is itself observed");
            e.log10_backoff = Some(bo);
        }
        entries[n - 1] = new_entries;
    }

    Ok(NGramModel {
        order,
        vocab,
        word_index,
        entries,
    })
}

/// Backoff probability using only the orders already filled in.
fn lower_log10_prob(entries: &[HashMap<Vec<u32>, NGramEntry>], history: &[u32], word: u32) -> f64 {
    let mut h = history;
    let mut acc = 0.0;
    loop {
        let mut key = h.to_vec();
        key.push(word);
        if let Some(e) = entries[key.len() - 1].get(&key) {
            return acc + e.log10_prob;
        }
        if let Some(bo) = entries[h.len() - 1].get(h).and_then(|e| e.log10_backoff) {
            acc += bo;
        }
        h = &h[1..];
    }
}

/// Builds the backoff acceptor G over `words`. Table words absent from the
/// model are given the `<unk>` unigram probability.
pub fn ngram_to_fst(model: &NGramModel, words: &SymbolTable) -> Fst {
    let ln10 = std::f64::consts::LN_10;
    let cost = |log10: f64| -log10 * ln10;
    let bos = model.word_index[BOS];
    let eos = model.word_index[EOS];
    let unk = model.word_index[UNK];

    let mut g = Fst::new(Semiring::Tropical, words.clone(), words.clone());
    let mut state_of: HashMap<Vec<u32>, StateId> = HashMap::new();
    let mut contexts: Vec<Vec<u32>> = vec![Vec::new()];
    for n in 1..model.order {
        let mut ks: Vec<Vec<u32>> = model.entries[n - 1]
            .keys()
            .filter(|k| *k.last().unwrap() != eos)
            .cloned()
            .collect();
        ks.sort();
        contexts.extend(ks);
    }
    for ctx in &contexts {
        let s = g.add_state();
        state_of.insert(ctx.clone(), s);
    }
    let start = if model.order >= 2 {
        state_of[&vec![bos]]
    } else {
        state_of[&Vec::new()]
    };
    g.set_start(start);

    let dest = |ngram: &[u32]| -> StateId {
        let keep = ngram.len().min(model.order - 1);
        let mut h = &ngram[ngram.len() - keep..];
        loop {
            if let Some(&s) = state_of.get(h) {
                return s;
            }
            h = &h[1..];
        }
    };

    // label lookup: model word id -> table label
    let label_of: Vec<Option<u32>> = model.vocab.iter().map(|w| words.find(w)).collect();

    for n in 1..=model.order {
        let mut keys: Vec<&Vec<u32>> = model.entries[n - 1].keys().collect();
        keys.sort();
        for key in keys {
            let e = model.entries[n - 1][key];
            let ctx = &key[..n - 1];
            let Some(&src) = state_of.get(ctx) else {
                continue;
            };
            let w = key[n - 1];
            if w == bos {
                continue;
            }
            if w == eos {
                g.set_final(src, cost(e.log10_prob));
                continue;
            }
            if let Some(label) = label_of[w as usize] {
                g.add_arc(src, Arc::new(label, label, cost(e.log10_prob), dest(key)));
            }
        }
    }

    // extra vocabulary behaves like <unk>
    let unk_entry = model.entries[0][&vec![unk]];
    let root = state_of[&Vec::new()];
    for (label, w) in words.symbols().iter().enumerate().skip(1) {
        if model.word_id(w).is_none() {
            let l = label as u32;
            g.add_arc(root, Arc::new(l, l, cost(unk_entry.log10_prob), dest(&[unk])));
        }
    }

    for ctx in contexts.iter().filter(|c| !c.is_empty()) {
        let src = state_of[ctx];
        let bo = model.entry(ctx).and_then(|e| e.log10_backoff).unwrap_or(0.0);
        g.add_arc(src, Arc::new(EPS, EPS, cost(bo), dest(&ctx[1..])));
    }
    g
}

/// Follows the canonical backoff path (explicit n-gram when present, else
/// the backoff arc) and returns its total cost, or `None` if a word has no
/// label in the graph.
pub fn canonical_path_cost<S: AsRef<str>>(g: &Fst, words: &[S]) -> Option<f64> {
    let mut s = g.start()?;
    let mut total = 0.0;
    for w in words {
        let label = g.isyms.find(w.as_ref())?;
        loop {
            if let Some(a) = g.arcs(s).iter().find(|a| a.ilabel == label) {
                total += a.weight;
                s = a.next;
                break;
            }
            let bo = g.arcs(s).iter().find(|a| a.ilabel == EPS)?;
            total += bo.weight;
            s = bo.next;
        }
    }
    loop {
        if let Some(f) = g.final_weight(s) {
            return Some(total + f);
        }
        let bo = g.arcs(s).iter().find(|a| a.ilabel == EPS)?;
        total += bo.weight;
        s = bo.next;
    }
}
