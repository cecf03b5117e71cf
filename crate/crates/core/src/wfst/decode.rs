//! Time-synchronous Viterbi beam search over a T∘L∘G graph.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use crate::ctc::{PosteriorGrid, DEFAULT_BEAM};

use super::fst::{Fst, Label, StateId, EPS};
use super::WfstError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeOptions {
    /// Maximum number of active tokens kept per frame (histogram pruning).
    pub beam: usize,
    /// Tokens costlier than the frame's best by more than this are dropped.
    pub score_beam: f64,
    pub acoustic_scale: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam: DEFAULT_BEAM,
            score_beam: f64::INFINITY,
            acoustic_scale: 1.0,
        }
    }
}

impl DecodeOptions {
    /// No pruning at all: exact Viterbi.
    pub fn unlimited() -> Self {
        DecodeOptions {
            beam: usize::MAX,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub words: Vec<String>,
    pub labels: Vec<Label>,
    /// Graph weight plus scaled acoustic cost of the best path.
    pub cost: f64,
}

/// State of the search when it ran out of hypotheses.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeDiagnostics {
    pub frame: usize,
    pub num_frames: usize,
    pub active_before: usize,
    pub best_partial: Vec<String>,
    pub reason: String,
}

impl fmt::Display for DecodeDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} at frame {}/{} ({} active tokens before; best partial: {:?})",
            self.reason,
            self.frame,
            self.num_frames,
            self.active_before,
            self.best_partial.join(" ")
        )
    }
}

#[derive(Debug, Clone, Copy)]
struct Token {
    cost: f64,
    bp: Option<usize>,
}

struct Trace {
    label: Label,
    prev: Option<usize>,
}

fn backtrack(arena: &[Trace], mut bp: Option<usize>) -> Vec<Label> {
    let mut out = Vec::new();
    while let Some(i) = bp {
        out.push(arena[i].label);
        bp = arena[i].prev;
    }
    out.reverse();
    out
}

fn relax(
    tokens: &mut HashMap<StateId, Token>,
    arena: &mut Vec<Trace>,
    from: Token,
    olabel: Label,
    cost: f64,
    next: StateId,
) -> bool {
    if tokens.get(&next).is_some_and(|t| t.cost <= cost) {
        return false;
    }
    let bp = if olabel == EPS {
        from.bp
    } else {
        arena.push(Trace {
            label: olabel,
            prev: from.bp,
        });
        Some(arena.len() - 1)
    };
    tokens.insert(next, Token { cost, bp });
    true
}

/// Propagates tokens through input-epsilon arcs. Weights may be negative
/// (backoff weights above one) but the epsilon subgraph of a decode graph is
/// acyclic, so label-correcting relaxation terminates.
fn epsilon_closure(graph: &Fst, tokens: &mut HashMap<StateId, Token>, arena: &mut Vec<Trace>) {
    let mut queue: VecDeque<StateId> = {
        let mut v: Vec<StateId> = tokens.keys().copied().collect();
        v.sort_unstable();
        v.into()
    };
    let mut pops = 0usize;
    let limit = 64 * (graph.num_states() + 1) * (graph.num_states() + 1);
    while let Some(s) = queue.pop_front() {
        pops += 1;
        assert!(pops <= limit, "input-epsilon cycle in decode graph");
        let tok = tokens[&s];
        for a in graph.arcs(s).iter().filter(|a| a.ilabel == EPS) {
            if relax(tokens, arena, tok, a.olabel, tok.cost + a.weight, a.next) {
                queue.push_back(a.next);
            }
        }
    }
}

fn prune(tokens: &mut HashMap<StateId, Token>, opts: &DecodeOptions) {
    let best = tokens.values().map(|t| t.cost).fold(f64::INFINITY, f64::min);
    let limit = best + opts.score_beam;
    tokens.retain(|_, t| t.cost <= limit);
    if tokens.len() > opts.beam {
        let mut v: Vec<(StateId, Token)> = tokens.drain().collect();
        v.sort_by(|a, b| a.1.cost.total_cmp(&b.1.cost).then(a.0.cmp(&b.0)));
        v.truncate(opts.beam);
        tokens.extend(v);
    }
}

/// Finds the lowest-cost path through `graph` whose input side consumes one
/// frame label per posterior frame. Frame arc cost is
/// `acoustic_scale * -ln P(unit | frame) + arc weight`; input labels are
/// alphabet index + 1 (see [`frame_label`](super::frame_label)).
pub fn decode(
    grid: &PosteriorGrid,
    graph: &Fst,
    opts: &DecodeOptions,
) -> Result<DecodeResult, WfstError> {
    if opts.beam == 0 {
        return Err(WfstError::InvalidModel("beam must be at least 1".into()));
    }
    let num_frames = grid.num_frames();
    let fail = |frame: usize, active: usize, best: Vec<String>, reason: &str| {
        WfstError::DecodeFailure(DecodeDiagnostics {
            frame,
            num_frames,
            active_before: active,
            best_partial: best,
            reason: reason.into(),
        })
    };
    let Some(start) = graph.start() else {
        return Err(fail(0, 0, Vec::new(), "empty graph"));
    };
    let units = grid.num_units();
    let log_probs = grid.log_probs();

    let mut arena: Vec<Trace> = Vec::new();
    let mut tokens: HashMap<StateId, Token> = HashMap::new();
    tokens.insert(start, Token { cost: 0.0, bp: None });
    epsilon_closure(graph, &mut tokens, &mut arena);
    prune(&mut tokens, opts);

    let words_of = |arena: &[Trace], bp: Option<usize>| -> Vec<String> {
        backtrack(arena, bp)
            .into_iter()
            .map(|l| graph.osyms.symbol(l).unwrap_or("?").to_string())
            .collect()
    };

    for t in 0..num_frames {
        let row = log_probs.row(t);
        let mut order: Vec<(StateId, Token)> = tokens.iter().map(|(&s, &k)| (s, k)).collect();
        order.sort_by_key(|p| p.0);
        let mut next: HashMap<StateId, Token> = HashMap::new();
        for &(s, tok) in &order {
            for a in graph.arcs(s).iter().filter(|a| a.ilabel != EPS) {
                let k = a.ilabel as usize - 1;
                if k >= units {
                    return Err(WfstError::InvalidModel(format!(
                        "graph input label {} exceeds posterior width {units}",
                        a.ilabel
                    )));
                }
                let ac = -row[k];
                if ac == f64::INFINITY {
                    continue;
                }
                let cost = tok.cost + opts.acoustic_scale * ac + a.weight;
                relax(&mut next, &mut arena, tok, a.olabel, cost, a.next);
            }
        }
        if next.is_empty() {
            let best = order
                .iter()
                .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
                .map(|p| words_of(&arena, p.1.bp))
                .unwrap_or_default();
            return Err(fail(t, order.len(), best, "no surviving token"));
        }
        epsilon_closure(graph, &mut next, &mut arena);
        prune(&mut next, opts);
        tokens = next;
    }

    let mut best: Option<(f64, StateId, Option<usize>)> = None;
    let mut order: Vec<(StateId, Token)> = tokens.iter().map(|(&s, &k)| (s, k)).collect();
    order.sort_by_key(|p| p.0);
    for (s, tok) in &order {
        if let Some(f) = graph.final_weight(*s) {
            let c = tok.cost + f;
            if best.is_none_or(|b| c < b.0) {
                best = Some((c, *s, tok.bp));
            }
        }
    }
    match best {
        Some((cost, _, bp)) => {
            let labels = backtrack(&arena, bp);
            Ok(DecodeResult {
                words: words_of(&arena, bp),
                labels,
                cost,
            })
        }
        None => {
            let partial = order
                .iter()
                .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
                .map(|p| words_of(&arena, p.1.bp))
                .unwrap_or_default();
            Err(fail(num_frames, order.len(), partial, "no token in a final state"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::{Alphabet, UnitKind};
    use crate::text::Prolex;
    use crate::wfst::{build_decode_graph, train_ngram, Smoothing};
    use ndarray::Array2;

    fn peaked(alphabet: &Alphabet, frames: &[&str], peak: f64) -> PosteriorGrid {
        let n = alphabet.len();
        let mut p = Array2::from_elem((frames.len(), n), (1.0 - peak) / (n - 1) as f64);
        for (t, f) in frames.iter().enumerate() {
            p[[t, alphabet.index_of(f).unwrap()]] = peak;
        }
        PosteriorGrid::from_probs(p).unwrap()
    }

    fn setup(words: &[(&str, &[&str])]) -> (Alphabet, Fst) {
        let mut lex = Prolex::new();
        let mut units = Vec::new();
        for (w, p) in words {
            lex.insert(w, p.iter().map(|s| s.to_string()).collect(), 0.0)
                .unwrap();
            units.extend(p.iter().copied());
        }
        let al = Alphabet::from_units(UnitKind::Phoneme, units).unwrap();
        let corpus: Vec<Vec<&str>> = words.iter().map(|(w, _)| vec![*w]).collect();
        let lm = train_ngram(&corpus, 2, Smoothing::WittenBell).unwrap();
        let g = build_decode_graph(&al, &lex, &lm).unwrap();
        (al, g)
    }

    #[test]
    fn single_word() {
        let (al, g) = setup(&[("two", &["t", "u"])]);
        let grid = peaked(&al, &["t", "t", "<b>", "u"], 0.9);
        let r = decode(&grid, &g, &DecodeOptions::default()).unwrap();
        assert_eq!(r.words, vec!["two"]);
    }

    #[test]
    fn picks_matching_word() {
        let (al, g) = setup(&[("one", &["w", "a", "n"]), ("two", &["t", "u"])]);
        let grid = peaked(&al, &["t", "<b>", "u", "u"], 0.8);
        let r = decode(&grid, &g, &DecodeOptions::unlimited()).unwrap();
        assert_eq!(r.words, vec!["two"]);
        let big = DecodeOptions {
            beam: 1_000_000,
            ..Default::default()
        };
        assert_eq!(decode(&grid, &g, &big).unwrap(), r);
    }

    #[test]
    fn impossible_alignment_fails_with_diagnostics() {
        let (al, g) = setup(&[("two", &["t", "u"])]);
        let mut p = Array2::zeros((2, al.len()));
        p[[0, 0]] = 1.0;
        p[[1, 0]] = 1.0;
        // only blanks have mass, but two is the only word and the empty
        // sentence is still allowed, so this decodes to nothing
        let grid = PosteriorGrid::from_probs(p).unwrap();
        let r = decode(&grid, &g, &DecodeOptions::default()).unwrap();
        assert!(r.words.is_empty());

        let mut p = Array2::zeros((1, al.len()));
        p[[0, al.index_of("t").unwrap()]] = 1.0;
        let grid = PosteriorGrid::from_probs(p).unwrap();
        match decode(&grid, &g, &DecodeOptions::default()) {
            Err(WfstError::DecodeFailure(d)) => assert_eq!(d.num_frames, 1),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
