//! Building blocks for phoneme-supervised multilingual CTC speech recognition.
//!
//! The crate is organised bottom-up:
//!
//! * [`inventory`]: unit inventories and the blank-first [`Alphabet`](inventory::Alphabet).
//! * [`text`]: text normalization, FST-based G2P application and pronunciation lexicons.
//! * [`bpe`]: language-balanced sentence sampling and byte-pair-encoding tokenizers.
//! * [`ctc`]: CTC loss, gradient, greedy and prefix beam search decoding.
//! * [`wfst`]: weighted transducers, decode-graph builders, n-gram LMs and Viterbi decoding.
//! * [`acoustic`]: a small trainable encoder, its output layer and crosslingual transfer.
//! * [`eval`]: edit distance, error rates and forgetting / sharing analyses.

pub mod acoustic;
pub mod bpe;
pub mod ctc;
pub mod eval;
pub mod inventory;
pub mod text;
pub mod wfst;

/// Numerically stable `ln(exp(a) + exp(b))`.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(x_i)` over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
