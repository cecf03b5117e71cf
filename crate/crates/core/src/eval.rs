//! Edit-distance error rates, catastrophic-forgetting WARD and the
//! phoneme-sharing (RIPO) vs relative WER reduction (RRWER) analysis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("total reference length is zero")]
    EmptyReference,
    #[error("WARD is undefined when the baseline error rate is {0}% (must be < 100)")]
    UndefinedWard(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_length: usize,
}

impl ErrorCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Fraction of reference tokens in error (not a percentage).
    pub fn rate(&self) -> Option<f64> {
        (self.reference_length > 0).then(|| self.errors() as f64 / self.reference_length as f64)
    }
}

impl std::ops::AddAssign for ErrorCounts {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
        self.reference_length += o.reference_length;
    }
}

/// Unit-cost Levenshtein alignment. On equal totals the backtrace prefers
/// substitution, then insertion, then deletion.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> ErrorCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = sub.min(d[i][j - 1] + 1).min(d[i - 1][j] + 1);
        }
    }
    let mut c = ErrorCounts {
        reference_length: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                if !same {
                    c.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if j > 0 && d[i][j] == d[i][j - 1] + 1 {
            c.insertions += 1;
            j -= 1;
        } else {
            c.deletions += 1;
            i -= 1;
        }
    }
    c
}

/// Pooled error rate in percent: `100 · Σ errors / Σ reference length`.
pub fn corpus_rate<T: PartialEq, R: AsRef<[T]>, H: AsRef<[T]>>(
    pairs: &[(R, H)],
) -> Result<f64, EvalError> {
    let mut total = ErrorCounts::default();
    for (r, h) in pairs {
        total += edit_distance(r.as_ref(), h.as_ref());
    }
    rate_percent(&total)
}

pub fn rate_percent(counts: &ErrorCounts) -> Result<f64, EvalError> {
    counts
        .rate()
        .map(|r| 100.0 * r)
        .ok_or(EvalError::EmptyReference)
}

/// Mean of per-language rates, as opposed to the pooled rate.
pub fn macro_average(rates: &[f64]) -> Option<f64> {
    (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
}

/// Word accuracy relative degradation in percent:
/// `100 · (after − before) / (100 − before)`.
pub fn ward(avg_wer_after: f64, avg_wer_before: f64) -> Result<f64, EvalError> {
    if avg_wer_before >= 100.0 {
        return Err(EvalError::UndefinedWard(avg_wer_before));
    }
    Ok(100.0 * (avg_wer_after - avg_wer_before) / (100.0 - avg_wer_before))
}

/// Inputs for one language of the sharing analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct SharingInput {
    pub language: String,
    /// Σ occurrences of the language's phonemes in its own training data.
    pub base_occurrences: u64,
    /// Σ occurrences of the same phonemes across all training languages.
    pub augmented_occurrences: u64,
    pub wer_phoneme: f64,
    pub wer_subword: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingPoint {
    pub language: String,
    pub ripo: f64,
    pub rrwer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingAnalysis {
    pub points: Vec<SharingPoint>,
    /// Languages dropped because a denominator was zero.
    pub skipped: Vec<String>,
    /// Least-squares `rrwer = slope · ripo + intercept`, when ≥ 2 distinct RIPO values.
    pub fit: Option<(f64, f64)>,
}

/// Relative increase in phoneme occurrences, in percent.
pub fn ripo(base: u64, augmented: u64) -> Option<f64> {
    (base > 0).then(|| 100.0 * (augmented as f64 - base as f64) / base as f64)
}

/// Relative reduction in WER of phoneme over subword supervision, in percent.
pub fn rrwer(wer_subword: f64, wer_phoneme: f64) -> Option<f64> {
    (wer_subword != 0.0).then(|| 100.0 * (wer_subword - wer_phoneme) / wer_subword)
}

/// Ordinary least squares `y = slope · x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

pub fn ripo_rrwer(inputs: &[SharingInput]) -> SharingAnalysis {
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for inp in inputs {
        match (
            ripo(inp.base_occurrences, inp.augmented_occurrences),
            rrwer(inp.wer_subword, inp.wer_phoneme),
        ) {
            (Some(ripo), Some(rrwer)) => points.push(SharingPoint {
                language: inp.language.clone(),
                ripo,
                rrwer,
            }),
            _ => {
                log::warn!("skipping {} in sharing analysis: zero denominator", inp.language);
                skipped.push(inp.language.clone());
            }
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.ripo).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.rrwer).collect();
    SharingAnalysis {
        fit: linear_fit(&xs, &ys),
        points,
        skipped,
    }
}
