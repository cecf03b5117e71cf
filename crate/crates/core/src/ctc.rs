//! Connectionist temporal classification: exact loss and gradient through
//! the blank-interleaved lattice, plus lexicon-free decoding.
//!
//! All lattice arithmetic is done in the log domain. Index 0 of every grid
//! row is the blank.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, Axis};
use thiserror::Error;

use crate::{log_add, log_sum_exp};

/// Beam width used when callers do not specify one.
pub const DEFAULT_BEAM: usize = 16;

const BLANK: usize = 0;

#[derive(Debug, Error, PartialEq)]
pub enum CtcError {
    #[error("label sequence of length {labels} (+{repeats} repeats) cannot align to {frames} frames")]
    Infeasible {
        frames: usize,
        labels: usize,
        repeats: usize,
    },
    #[error("label {label} outside alphabet of size {size}")]
    LabelOutOfRange { label: usize, size: usize },
    #[error("label sequence contains the blank at position {0}")]
    BlankInLabels(usize),
    #[error("invalid posterior grid: {0}")]
    InvalidGrid(String),
}

/// Per-frame log posteriors over blank + units, shape `T × (|V|+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    log_probs: Array2<f64>,
}

impl PosteriorGrid {
    /// Wraps log probabilities, checking that every row normalises.
    pub fn from_log_probs(log_probs: Array2<f64>) -> Result<Self, CtcError> {
        if log_probs.ncols() < 2 {
            return Err(CtcError::InvalidGrid("need at least blank and one unit".into()));
        }
        for (t, row) in log_probs.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(CtcError::InvalidGrid(format!("row {t} is not finite")));
            }
            let lse = log_sum_exp(row.as_slice().unwrap_or(&row.to_vec()));
            if lse.abs() > 1e-6 {
                return Err(CtcError::InvalidGrid(format!(
                    "row {t} log-sums to {lse}, expected 0"
                )));
            }
        }
        Ok(PosteriorGrid { log_probs })
    }

    pub fn from_probs(probs: Array2<f64>) -> Result<Self, CtcError> {
        Self::from_log_probs(probs.mapv(f64::ln))
    }

    /// Applies a row-wise log-softmax to raw logits.
    pub fn from_logits(logits: &Array2<f64>) -> Result<Self, CtcError> {
        let mut lp = logits.clone();
        for mut row in lp.axis_iter_mut(Axis(0)) {
            let lse = log_sum_exp(&row.to_vec());
            row.mapv_inplace(|v| v - lse);
        }
        Self::from_log_probs(lp)
    }

    pub fn log_probs(&self) -> &Array2<f64> {
        &self.log_probs
    }

    pub fn num_frames(&self) -> usize {
        self.log_probs.nrows()
    }

    /// Number of columns, blank included.
    pub fn num_units(&self) -> usize {
        self.log_probs.ncols()
    }

    pub fn row(&self, t: usize) -> ArrayView1<'_, f64> {
        self.log_probs.row(t)
    }

    pub fn probs(&self) -> Array2<f64> {
        self.log_probs.mapv(f64::exp)
    }
}

/// How the summed negative log-likelihood is scaled during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Divide by the number of encoder output frames.
    #[default]
    InputLength,
    /// Divide by the number of target labels (at least 1).
    LabelLength,
    None,
}

impl LossNormalization {
    pub fn divisor(self, frames: usize, labels: usize) -> f64 {
        match self {
            LossNormalization::InputLength => frames.max(1) as f64,
            LossNormalization::LabelLength => labels.max(1) as f64,
            LossNormalization::None => 1.0,
        }
    }
}

/// Number of adjacent equal labels; each needs a separating blank.
pub fn count_repeats(labels: &[usize]) -> usize {
    labels.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Minimum number of frames able to carry `labels`.
pub fn min_frames(labels: &[usize]) -> usize {
    labels.len() + count_repeats(labels)
}

fn check(grid: &PosteriorGrid, labels: &[usize]) -> Result<(), CtcError> {
    let size = grid.num_units();
    for (i, &l) in labels.iter().enumerate() {
        if l == BLANK {
            return Err(CtcError::BlankInLabels(i));
        }
        if l >= size {
            return Err(CtcError::LabelOutOfRange { label: l, size });
        }
    }
    let repeats = count_repeats(labels);
    if grid.num_frames() < labels.len() + repeats {
        return Err(CtcError::Infeasible {
            frames: grid.num_frames(),
            labels: labels.len(),
            repeats,
        });
    }
    Ok(())
}

/// Blank-interleaved state labels: `<b> y1 <b> y2 ... yL <b>`.
fn extended(labels: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(BLANK);
    for &l in labels {
        ext.push(l);
        ext.push(BLANK);
    }
    ext
}

/// Whether state `s` may be entered from `s - 2` (skipping a blank).
fn can_skip(ext: &[usize], s: usize) -> bool {
    s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2]
}

fn forward(grid: &PosteriorGrid, ext: &[usize]) -> Array2<f64> {
    let t_len = grid.num_frames();
    let s_len = ext.len();
    let lp = grid.log_probs();
    let mut alpha = Array2::from_elem((t_len, s_len), f64::NEG_INFINITY);
    alpha[[0, 0]] = lp[[0, ext[0]]];
    if s_len > 1 {
        alpha[[0, 1]] = lp[[0, ext[1]]];
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_add(acc, alpha[[t - 1, s - 1]]);
            }
            if can_skip(ext, s) {
                acc = log_add(acc, alpha[[t - 1, s - 2]]);
            }
            alpha[[t, s]] = acc + lp[[t, ext[s]]];
        }
    }
    alpha
}

fn backward(grid: &PosteriorGrid, ext: &[usize]) -> Array2<f64> {
    let t_len = grid.num_frames();
    let s_len = ext.len();
    let lp = grid.log_probs();
    let mut beta = Array2::from_elem((t_len, s_len), f64::NEG_INFINITY);
    beta[[t_len - 1, s_len - 1]] = lp[[t_len - 1, ext[s_len - 1]]];
    if s_len > 1 {
        beta[[t_len - 1, s_len - 2]] = lp[[t_len - 1, ext[s_len - 2]]];
    }
    for t in (0..t_len - 1).rev() {
        for s in 0..s_len {
            let mut acc = beta[[t + 1, s]];
            if s + 1 < s_len {
                acc = log_add(acc, beta[[t + 1, s + 1]]);
            }
            if s + 2 < s_len && can_skip(ext, s + 2) {
                acc = log_add(acc, beta[[t + 1, s + 2]]);
            }
            beta[[t, s]] = acc + lp[[t, ext[s]]];
        }
    }
    beta
}

fn log_likelihood(alpha: &Array2<f64>) -> f64 {
    let t = alpha.nrows() - 1;
    let s = alpha.ncols();
    let mut ll = alpha[[t, s - 1]];
    if s > 1 {
        ll = log_add(ll, alpha[[t, s - 2]]);
    }
    ll
}

/// Negative log-likelihood `-ln Σ_{π ↦ y} Π_t P(π_t | x)`.
pub fn ctc_loss(grid: &PosteriorGrid, labels: &[usize]) -> Result<f64, CtcError> {
    check(grid, labels)?;
    let ext = extended(labels);
    Ok(-log_likelihood(&forward(grid, &ext)))
}

/// Loss together with its gradient with respect to the logits that produced
/// `grid` through a softmax: `softmax - occupancy`.
pub fn ctc_loss_and_grad(
    grid: &PosteriorGrid,
    labels: &[usize],
) -> Result<(f64, Array2<f64>), CtcError> {
    check(grid, labels)?;
    let ext = extended(labels);
    let alpha = forward(grid, &ext);
    let beta = backward(grid, &ext);
    let ll = log_likelihood(&alpha);
    let lp = grid.log_probs();
    let (t_len, k) = lp.dim();
    let mut grad = lp.mapv(f64::exp);
    let mut occ = vec![f64::NEG_INFINITY; k];
    for t in 0..t_len {
        occ.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for (s, &label) in ext.iter().enumerate() {
            // α and β both include the emission at t, so remove it once
            let v = alpha[[t, s]] + beta[[t, s]] - lp[[t, label]];
            occ[label] = log_add(occ[label], v);
        }
        for (j, &o) in occ.iter().enumerate() {
            if o > f64::NEG_INFINITY {
                grad[[t, j]] -= (o - ll).exp();
            }
        }
    }
    Ok((-ll, grad))
}

pub fn ctc_grad(grid: &PosteriorGrid, labels: &[usize]) -> Result<Array2<f64>, CtcError> {
    ctc_loss_and_grad(grid, labels).map(|(_, g)| g)
}

/// Merges repeats and drops blanks from a frame-level path.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != BLANK {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Best-path decoding: per-frame argmax, then collapse.
pub fn greedy_decode(grid: &PosteriorGrid) -> Vec<usize> {
    let path: Vec<usize> = grid
        .log_probs()
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}

#[derive(Clone, Copy)]
struct PrefixScore {
    blank: f64,
    non_blank: f64,
}

impl PrefixScore {
    const EMPTY: PrefixScore = PrefixScore {
        blank: f64::NEG_INFINITY,
        non_blank: f64::NEG_INFINITY,
    };

    fn total(&self) -> f64 {
        log_add(self.blank, self.non_blank)
    }
}

fn rank(entries: &mut [(Vec<usize>, f64)]) {
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

/// CTC prefix beam search. Each prefix tracks the probability of ending in
/// a blank and in a non-blank, so its score is the marginal over every
/// alignment explored. Returns prefixes with log scores, best first; equal
/// scores are ordered lexicographically.
pub fn prefix_beam_search(grid: &PosteriorGrid, beam_width: usize) -> Vec<(Vec<usize>, f64)> {
    let beam_width = beam_width.max(1);
    let k = grid.num_units();
    let mut beams: Vec<(Vec<usize>, PrefixScore)> = vec![(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            non_blank: f64::NEG_INFINITY,
        },
    )];
    for t in 0..grid.num_frames() {
        let row = grid.row(t);
        let mut next: HashMap<Vec<usize>, PrefixScore> = HashMap::new();
        for (prefix, score) in &beams {
            let total = score.total();
            let e = next.entry(prefix.clone()).or_insert(PrefixScore::EMPTY);
            e.blank = log_add(e.blank, total + row[BLANK]);
            let last = prefix.last().copied();
            for c in 1..k {
                let p = row[c];
                let mut extended = prefix.clone();
                extended.push(c);
                let e = next.entry(extended).or_insert(PrefixScore::EMPTY);
                if Some(c) == last {
                    // a repeat needs a blank in between to count as new
                    e.non_blank = log_add(e.non_blank, score.blank + p);
                    let same = next.get_mut(prefix).unwrap();
                    same.non_blank = log_add(same.non_blank, score.non_blank + p);
                } else {
                    e.non_blank = log_add(e.non_blank, total + p);
                }
            }
        }
        let mut ranked: Vec<(Vec<usize>, f64)> =
            next.iter().map(|(p, s)| (p.clone(), s.total())).collect();
        rank(&mut ranked);
        ranked.truncate(beam_width);
        beams = ranked
            .into_iter()
            .map(|(p, _)| {
                let s = next[&p];
                (p, s)
            })
            .collect();
    }
    let mut out: Vec<(Vec<usize>, f64)> = beams
        .into_iter()
        .map(|(p, s)| (p, s.total()))
        .filter(|(_, s)| *s > f64::NEG_INFINITY)
        .collect();
    rank(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn grid(p: Array2<f64>) -> PosteriorGrid {
        PosteriorGrid::from_probs(p).unwrap()
    }

    #[test]
    fn single_frame_single_label() {
        let g = grid(array![[0.3, 0.7]]);
        let loss = ctc_loss(&g, &[1]).unwrap();
        assert!((loss - -(0.7f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn two_frames_three_paths() {
        // aa, a<b>, <b>a
        let g = grid(array![[0.5, 0.5], [0.5, 0.5]]);
        let loss = ctc_loss(&g, &[1]).unwrap();
        assert!((loss - -(0.75f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_bad_labels() {
        let g = grid(array![[0.5, 0.5], [0.5, 0.5]]);
        assert_eq!(
            ctc_loss(&g, &[1, 1]),
            Err(CtcError::Infeasible {
                frames: 2,
                labels: 2,
                repeats: 1
            })
        );
        assert_eq!(
            ctc_loss(&g, &[3]),
            Err(CtcError::LabelOutOfRange { label: 3, size: 2 })
        );
        assert_eq!(ctc_loss(&g, &[0]), Err(CtcError::BlankInLabels(0)));
    }

    #[test]
    fn empty_labels_all_blank() {
        let g = grid(array![[0.25, 0.75], [0.5, 0.5]]);
        let loss = ctc_loss(&g, &[]).unwrap();
        assert!((loss - -(0.125f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn single_frame_gradient_is_softmax_minus_onehot() {
        let g = grid(array![[0.2, 0.5, 0.3]]);
        let grad = ctc_grad(&g, &[1]).unwrap();
        let expected = [0.2, 0.5 - 1.0, 0.3];
        for j in 0..3 {
            assert!((grad[[0, j]] - expected[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let g = grid(array![
            [0.1, 0.6, 0.3],
            [0.4, 0.4, 0.2],
            [0.3, 0.3, 0.4],
            [0.5, 0.1, 0.4]
        ]);
        let grad = ctc_grad(&g, &[1, 2]).unwrap();
        for row in grad.axis_iter(Axis(0)) {
            assert!(row.sum().abs() < 1e-10);
        }
    }

    #[test]
    fn greedy_collapse_rules() {
        assert_eq!(collapse(&[1, 1, 0, 2, 2]), vec![1, 2]);
        assert_eq!(collapse(&[0, 0, 0]), Vec::<usize>::new());
        assert_eq!(collapse(&[1, 0, 1]), vec![1, 1]);
        let g = grid(array![[0.1, 0.9], [0.8, 0.2], [0.1, 0.9]]);
        assert_eq!(greedy_decode(&g), vec![1, 1]);
    }

    #[test]
    fn prefix_search_single_frame() {
        let g = grid(array![[0.2, 0.5, 0.3]]);
        let best = &prefix_beam_search(&g, DEFAULT_BEAM)[0];
        assert_eq!(best.0, vec![1]);
        let g = grid(array![[0.6, 0.3, 0.1]]);
        assert!(prefix_beam_search(&g, DEFAULT_BEAM)[0].0.is_empty());
    }

    #[test]
    fn prefix_search_beats_greedy_when_mass_is_split() {
        // greedy picks blank everywhere, but "a" carries more total mass
        let g = grid(array![[0.4, 0.3, 0.3], [0.4, 0.3, 0.3]]);
        assert!(greedy_decode(&g).is_empty());
        let best = &prefix_beam_search(&g, 8)[0];
        assert_eq!(best.0.len(), 1);
        // P("a") = 0.3*0.3 + 0.3*0.4 + 0.4*0.3 = 0.33 > P("") = 0.16
        assert!((best.1 - 0.33f64.ln()).abs() < 1e-12);
        assert_eq!(best.0, vec![1], "tie with label 2 resolved lexicographically");
    }

    #[test]
    fn grid_validation() {
        assert!(PosteriorGrid::from_probs(array![[0.5, 0.6]]).is_err());
        assert!(PosteriorGrid::from_probs(array![[1.0]]).is_err());
        let g = PosteriorGrid::from_logits(&array![[0.0, 2f64.ln()]]).unwrap();
        assert!((g.probs()[[0, 1]] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn normalisation_divisors() {
        assert_eq!(LossNormalization::InputLength.divisor(10, 3), 10.0);
        assert_eq!(LossNormalization::LabelLength.divisor(10, 0), 1.0);
        assert_eq!(LossNormalization::None.divisor(10, 3), 1.0);
    }
}
