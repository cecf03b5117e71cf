//! Independent reference implementations used by the integration tests and
//! the acceptance suite. Everything here is deliberately naive: exhaustive
//! enumeration or textbook recursion, sharing no code with the library.

#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::Array2;
use phonoglot::ctc::PosteriorGrid;
use phonoglot::inventory::{Alphabet, UnitKind};
use phonoglot::text::Prolex;
use phonoglot::wfst::{
    build_decode_graph, ngram_to_fst, train_ngram, word_table, Fst, NGramModel, Smoothing, StateId, EPS,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Merges repeats, then drops blanks (index 0).
pub fn collapse_path(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != 0 {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Calls `f` with every sequence of length `len` over `0..base`.
pub fn for_each_sequence(base: usize, len: usize, mut f: impl FnMut(&[usize])) {
    let mut seq = vec![0usize; len];
    loop {
        f(&seq);
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            seq[i] += 1;
            if seq[i] < base {
                break;
            }
            seq[i] = 0;
            i += 1;
        }
    }
}

/// `-ln Σ_π P(π)` over every frame path collapsing to `labels`.
pub fn brute_ctc_loss(log_probs: &Array2<f64>, labels: &[usize]) -> f64 {
    let (t, v) = log_probs.dim();
    let mut total = 0.0;
    for_each_sequence(v, t, |path| {
        if collapse_path(path) == labels {
            total += path
                .iter()
                .enumerate()
                .map(|(i, &k)| log_probs[[i, k]])
                .sum::<f64>()
                .exp();
        }
    });
    -total.ln()
}

/// Random logits of shape `(frames, units)` with entries in `[-scale, scale)`.
pub fn random_logits(rng: &mut ChaCha8Rng, frames: usize, units: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((frames, units), |_| rng.random_range(-scale..scale))
}

/// A random CTC instance with `T ≤ max_t`, `L ≤ max_l`, `|V| ≤ max_v`
/// (blank included) that admits at least one alignment.
pub fn random_ctc_instance(
    rng: &mut ChaCha8Rng,
    max_t: usize,
    max_l: usize,
    max_v: usize,
) -> (Array2<f64>, Vec<usize>) {
    loop {
        let v = rng.random_range(2..=max_v);
        let t = rng.random_range(1..=max_t);
        let l = rng.random_range(0..=max_l);
        let labels: Vec<usize> = (0..l).map(|_| rng.random_range(1..v)).collect();
        let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
        if labels.len() + repeats <= t {
            return (random_logits(rng, t, v, 3.0), labels);
        }
    }
}

/// Tropical cost of the cheapest path of an acceptor whose non-epsilon
/// input labels spell `labels`, epsilon arcs followed freely.
pub fn acceptor_cost(g: &Fst, labels: &[u32]) -> Option<f64> {
    let closure = |dist: &mut HashMap<StateId, f64>| {
        for _ in 0..=g.num_states() {
            let mut changed = false;
            let snapshot: Vec<(StateId, f64)> = dist.iter().map(|(&s, &c)| (s, c)).collect();
            for (s, c) in snapshot {
                for a in g.arcs(s).iter().filter(|a| a.ilabel == EPS) {
                    let nc = c + a.weight;
                    let e = dist.entry(a.next).or_insert(f64::INFINITY);
                    if nc < *e - 1e-15 {
                        *e = nc;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
    };
    let mut dist: HashMap<StateId, f64> = HashMap::from([(g.start()?, 0.0)]);
    closure(&mut dist);
    for &l in labels {
        let mut next: HashMap<StateId, f64> = HashMap::new();
        for (&s, &c) in &dist {
            for a in g.arcs(s).iter().filter(|a| a.ilabel == l) {
                let e = next.entry(a.next).or_insert(f64::INFINITY);
                *e = e.min(c + a.weight);
            }
        }
        if next.is_empty() {
            return None;
        }
        closure(&mut next);
        dist = next;
    }
    dist.iter()
        .filter_map(|(&s, &c)| g.final_weight(s).map(|f| c + f))
        .min_by(f64::total_cmp)
}

/// Small decoding world: three units, five words (one homophone pair, one
/// prefix pair), a random n-gram grammar and its composed graph.
pub struct ToyWorld {
    pub alphabet: Alphabet,
    pub prolex: Prolex,
    pub lm: NGramModel,
    pub g: Fst,
    pub graph: Fst,
}

pub fn toy_world(rng: &mut ChaCha8Rng) -> ToyWorld {
    let units = ["a", "b", "c"];
    let alphabet = Alphabet::from_units(UnitKind::Phoneme, units).unwrap();
    let pron = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| -> Vec<String> {
        let n = rng.random_range(lo..=hi);
        (0..n).map(|_| units[rng.random_range(0..3)].to_string()).collect()
    };
    let homophone = pron(rng, 1, 2);
    let stem = pron(rng, 1, 2);
    let mut longer = stem.clone();
    longer.push(units[rng.random_range(0..3)].to_string());
    let prons = [homophone.clone(), homophone, stem, longer, pron(rng, 1, 3)];
    let words: Vec<String> = (0..prons.len()).map(|i| format!("w{i}")).collect();
    let mut prolex = Prolex::new();
    for (w, p) in words.iter().zip(prons) {
        let weight = rng.random_range(0.0..1.0);
        prolex.insert(w, p, weight).unwrap();
    }
    let sentences: Vec<Vec<String>> = (0..6)
        .map(|_| {
            let n = rng.random_range(1..=3);
            (0..n).map(|_| words[rng.random_range(0..words.len())].clone()).collect()
        })
        .collect();
    let order = rng.random_range(1..=3);
    let lm = train_ngram(&sentences, order, Smoothing::WittenBell).unwrap();
    let g = ngram_to_fst(&lm, &word_table(&prolex, Some(&lm)));
    let graph = build_decode_graph(&alphabet, &prolex, &lm).unwrap();
    ToyWorld {
        alphabet,
        prolex,
        lm,
        g,
        graph,
    }
}

/// Every way of spelling `units` as a sequence of lexicon pronunciations,
/// with the summed pronunciation cost.
fn segmentations(prolex: &Prolex, alphabet: &Alphabet, units: &[usize]) -> Vec<(Vec<String>, f64)> {
    if units.is_empty() {
        return vec![(Vec::new(), 0.0)];
    }
    let mut out = Vec::new();
    for (word, prons) in prolex.iter() {
        for p in prons {
            let ids: Vec<usize> = p.phones.iter().map(|s| alphabet.index_of(s).unwrap()).collect();
            if units.starts_with(&ids) {
                for (mut rest, c) in segmentations(prolex, alphabet, &units[ids.len()..]) {
                    rest.insert(0, word.to_string());
                    out.push((rest, c + p.weight));
                }
            }
        }
    }
    out
}

/// Exhaustive minimum over (word sequence, alignment) of acoustic cost plus
/// lexicon and grammar cost. Returns the optimum and every word sequence
/// attaining it within `tol`.
pub fn decode_oracle(world: &ToyWorld, grid: &PosteriorGrid, tol: f64) -> (f64, Vec<Vec<String>>) {
    let lp = grid.log_probs();
    let (t, v) = lp.dim();
    let mut graph_cost: HashMap<Vec<usize>, Vec<(Vec<String>, f64)>> = HashMap::new();
    let mut best: HashMap<Vec<String>, f64> = HashMap::new();
    for_each_sequence(v, t, |path| {
        let acoustic: f64 = -path.iter().enumerate().map(|(i, &k)| lp[[i, k]]).sum::<f64>();
        let units = collapse_path(path);
        let options = graph_cost.entry(units.clone()).or_insert_with(|| {
            segmentations(&world.prolex, &world.alphabet, &units)
                .into_iter()
                .filter_map(|(words, c)| {
                    let labels: Vec<u32> = words.iter().map(|w| world.g.isyms.find(w).unwrap()).collect();
                    acceptor_cost(&world.g, &labels).map(|gc| (words, c + gc))
                })
                .collect()
        });
        for (words, c) in options.iter() {
            let e = best.entry(words.clone()).or_insert(f64::INFINITY);
            *e = e.min(acoustic + c);
        }
    });
    let min = best.values().cloned().fold(f64::INFINITY, f64::min);
    let argmins = best
        .into_iter()
        .filter(|(_, c)| *c <= min + tol)
        .map(|(w, _)| w)
        .collect();
    (min, argmins)
}

/// Levenshtein distance by memoized recursion on prefix lengths.
pub fn edit_distance_oracle<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut [Option<usize>]) -> usize {
        if i == 0 {
            return j;
        }
        if j == 0 {
            return i;
        }
        let key = i * (b.len() + 1) + j;
        if let Some(d) = memo[key] {
            return d;
        }
        let d = (go(a, b, i - 1, j - 1, memo) + usize::from(a[i - 1] != b[j - 1]))
            .min(go(a, b, i - 1, j, memo) + 1)
            .min(go(a, b, i, j - 1, memo) + 1);
        memo[key] = Some(d);
        d
    }
    let mut memo = vec![None; (a.len() + 1) * (b.len() + 1)];
    go(a, b, a.len(), b.len(), &mut memo)
}

/// All sequences of length `0..=max_len` over `0..symbols`.
pub fn all_sequences(symbols: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for len in 0..=max_len {
        for_each_sequence(symbols, len, |s| out.push(s.to_vec()));
    }
    out
}

/// Central finite difference of `f` at every entry of `x`.
pub fn central_differences(x: &Array2<f64>, h: f64, f: impl Fn(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut g = Array2::zeros(x.dim());
    let mut probe = x.clone();
    for idx in ndarray::indices(x.dim()) {
        let orig = probe[idx];
        probe[idx] = orig + h;
        let up = f(&probe);
        probe[idx] = orig - h;
        let down = f(&probe);
        probe[idx] = orig;
        g[idx] = (up - down) / (2.0 * h);
    }
    g
}
