//! Training loop, crosslingual transfer initialization and embedding export.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ctc::{ctc_loss, ctc_loss_and_grad, min_frames, LossNormalization};
use crate::inventory::{Alphabet, UnitKind};

use super::checkpoint::{forward, FeatureMatrix, ModelCheckpoint};
use super::model::{backward, embedding_init_std, encode, gaussian, output_posteriors, Params};
use super::{AcousticError, TrainSchedule};

/// One training example: features and blank-free label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    /// Normalized loss of the initial model on the training set.
    pub initial_train_loss: f64,
    /// Normalized loss of the final (averaged) model on the training set.
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch with the lowest validation loss.
    pub epochs_to_converge: usize,
    /// Epochs whose parameters were averaged into the final model.
    pub averaged_epochs: Vec<usize>,
    pub early_stopped: bool,
    /// Utterances dropped because their labels cannot align to their frames.
    pub skipped_utterances: usize,
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn new(p: &Params) -> Self {
        Adam {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Params, grads: &Params, lr: f64, s: &TrainSchedule) {
        self.t += 1;
        let (b1, b2) = (s.adam_beta1, s.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let g = grads.flatten();
        let mut i = 0;
        self.m.visit_mut(|_, m| {
            for (mj, gj) in m.iter_mut().zip(&g[i]) {
                *mj = b1 * *mj + (1.0 - b1) * gj;
            }
            i += 1;
        });
        i = 0;
        self.v.visit_mut(|_, v| {
            for (vj, gj) in v.iter_mut().zip(&g[i]) {
                *vj = b2 * *vj + (1.0 - b2) * gj * gj;
            }
            i += 1;
        });
        let m = self.m.flatten();
        let v = self.v.flatten();
        i = 0;
        params.visit_mut(|_, p| {
            for (j, pj) in p.iter_mut().enumerate() {
                let mh = m[i][j] / c1;
                let vh = v[i][j] / c2;
                *pj -= lr * mh / (vh.sqrt() + s.adam_eps);
            }
            i += 1;
        });
    }
}

fn feasible(ckpt: &ModelCheckpoint, u: &Utterance) -> bool {
    ckpt.config.output_frames(u.features.num_frames()) >= min_frames(&u.labels)
}

fn check_corpus(ckpt: &ModelCheckpoint, utts: &[Utterance]) -> Result<(), AcousticError> {
    let n = ckpt.alphabet.len();
    for u in utts {
        if u.features.dim() != ckpt.config.input_dim {
            return Err(AcousticError::Shape(format!(
                "feature dim {} does not match input_dim {}",
                u.features.dim(),
                ckpt.config.input_dim
            )));
        }
        if let Some(&l) = u.labels.iter().find(|&&l| l == 0 || l >= n) {
            return Err(AcousticError::Shape(format!(
                "label {l} is blank or outside the {n}-unit alphabet"
            )));
        }
    }
    Ok(())
}

/// Mean normalized CTC loss over the feasible utterances (inference mode).
pub fn evaluate_loss(
    ckpt: &ModelCheckpoint,
    utts: &[Utterance],
    norm: LossNormalization,
) -> Result<f64, AcousticError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for u in utts.iter().filter(|u| feasible(ckpt, u)) {
        let grid = forward(ckpt, &u.features)?;
        let loss = ctc_loss(&grid, &u.labels)?;
        total += loss / norm.divisor(grid.num_frames(), u.labels.len());
        count += 1;
    }
    if count == 0 {
        return Err(AcousticError::EmptyCorpus);
    }
    Ok(total / count as f64)
}

/// Loss and accumulated gradient of one utterance in training mode.
fn utterance_step(
    ckpt: &ModelCheckpoint,
    u: &Utterance,
    rng: &mut ChaCha8Rng,
    norm: LossNormalization,
    grads: &mut Params,
    weight: f64,
) -> Result<f64, AcousticError> {
    let cache = encode(&ckpt.params, &ckpt.config, u.features.frames().view(), Some(rng));
    let grid = output_posteriors(&ckpt.params.output, cache.hidden())?;
    let (loss, mut dz) = ctc_loss_and_grad(&grid, &u.labels)?;
    let scale = weight / norm.divisor(grid.num_frames(), u.labels.len());
    dz *= scale;
    backward(&ckpt.params, &cache, &dz, grads);
    Ok(loss / norm.divisor(grid.num_frames(), u.labels.len()))
}

/// Trains with Adam under the Noam schedule, early-stops on validation loss
/// and returns the average of the `avg_top_k` best-validation checkpoints.
/// An empty `valid` set falls back to the training set for model selection.
pub fn train(
    mut ckpt: ModelCheckpoint,
    train_set: &[Utterance],
    valid: &[Utterance],
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(ModelCheckpoint, History), AcousticError> {
    schedule.validate()?;
    ckpt.validate()?;
    check_corpus(&ckpt, train_set)?;
    check_corpus(&ckpt, valid)?;
    let usable: Vec<&Utterance> = train_set.iter().filter(|u| feasible(&ckpt, u)).collect();
    let skipped = train_set.len() - usable.len();
    if skipped > 0 {
        log::warn!("skipping {skipped} utterances with infeasible CTC alignments");
    }
    if usable.is_empty() {
        return Err(AcousticError::EmptyCorpus);
    }
    let valid: Vec<Utterance> = if valid.iter().any(|u| feasible(&ckpt, u)) {
        valid.to_vec()
    } else {
        usable.iter().map(|u| (*u).clone()).collect()
    };
    let norm = schedule.loss_normalization;
    let train_owned: Vec<Utterance> = usable.iter().map(|u| (*u).clone()).collect();

    let mut history = History {
        initial_train_loss: evaluate_loss(&ckpt, &train_owned, norm)?,
        skipped_utterances: skipped,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam = Adam::new(&ckpt.params);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut step = 0usize;
    let mut best: Vec<(f64, usize, Params)> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut since_improve = 0usize;
    let mut epoch = 0usize;

    while step < schedule.total_steps {
        epoch += 1;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            if step >= schedule.total_steps {
                break;
            }
            step += 1;
            lr = schedule.lr(step);
            let mut grads = ckpt.params.zeros_like();
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                epoch_loss += utterance_step(&ckpt, usable[i], &mut rng, norm, &mut grads, w)?;
            }
            adam.step(&mut ckpt.params, &grads, lr, schedule);
        }
        if !ckpt.params.all_finite() {
            return Err(AcousticError::Numeric(format!("parameters diverged in epoch {epoch}")));
        }
        let val_loss = evaluate_loss(&ckpt, &valid, norm)?;
        history.epochs.push(EpochStats {
            epoch,
            step,
            lr,
            train_loss: epoch_loss / usable.len() as f64,
            val_loss,
        });
        log::debug!("epoch {epoch} step {step} val {val_loss:.4}");

        best.push((val_loss, epoch, ckpt.params.clone()));
        best.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        best.truncate(schedule.avg_top_k);
        if val_loss < best_val {
            best_val = val_loss;
            since_improve = 0;
            history.epochs_to_converge = epoch;
        } else {
            since_improve += 1;
            if since_improve >= schedule.early_stop_patience {
                history.early_stopped = true;
                break;
            }
        }
    }

    let sets: Vec<&Params> = best.iter().map(|b| &b.2).collect();
    ckpt.params = Params::average(&sets);
    history.averaged_epochs = best.iter().map(|b| b.1).collect();
    ckpt.meta.seed = seed;
    ckpt.meta.step = step;
    ckpt.meta.epoch = epoch;
    ckpt.meta.lr = schedule.lr(step);
    history.final_train_loss = evaluate_loss(&ckpt, &train_owned, norm)?;
    history.final_val_loss = evaluate_loss(&ckpt, &valid, norm)?;
    Ok((ckpt, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Copy output rows of units shared with the pretrained alphabet
    /// (including blank); draw the rest.
    CopyShared,
    /// Redraw the whole output matrix.
    RandomAll,
}

/// Builds a model for `target` from a pretrained one: encoder copied
/// verbatim, output matrix per `mode`. Fresh rows are `N(0, 1/sqrt(D))`,
/// drawn in target-index order from `seed`.
pub fn transfer_init(
    pretrained: &ModelCheckpoint,
    target: &Alphabet,
    mode: InitMode,
    seed: u64,
) -> Result<ModelCheckpoint, AcousticError> {
    let d = pretrained.config.hidden_dim;
    if pretrained.params.output.ncols() != d {
        return Err(AcousticError::Shape(format!(
            "output matrix has {} columns, encoder width is {d}",
            pretrained.params.output.ncols()
        )));
    }
    if mode == InitMode::CopyShared && pretrained.alphabet.kind() != target.kind() {
        return Err(AcousticError::Config(format!(
            "cannot copy {} embeddings into a {} alphabet",
            pretrained.alphabet.kind(),
            target.kind()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = embedding_init_std(d);
    let mut w = Array2::zeros((target.len(), d));
    for (i, sym) in target.symbols().enumerate() {
        let src = match mode {
            InitMode::CopyShared => pretrained.alphabet.index_of(sym).ok(),
            InitMode::RandomAll => None,
        };
        match src {
            Some(j) => w.row_mut(i).assign(&pretrained.params.output.row(j)),
            None => w.row_mut(i).assign(&gaussian(&mut rng, 1, d, std).row(0)),
        }
    }
    let mut out = pretrained.clone();
    out.params.output = w;
    out.alphabet = target.clone();
    out.meta.step = 0;
    out.meta.epoch = 0;
    out.meta.seed = seed;
    Ok(out)
}

/// One `(symbol, W row)` pair per alphabet unit, blank included.
pub fn export_embeddings(ckpt: &ModelCheckpoint) -> Vec<(String, Vec<f64>)> {
    ckpt.alphabet
        .symbols()
        .zip(ckpt.params.output.rows())
        .map(|(s, row)| (s.to_string(), row.to_vec()))
        .collect()
}

/// Tab-separated embedding table: symbol followed by D values per line.
/// Values use Rust's shortest round-trip formatting.
pub fn embeddings_to_tsv(rows: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    for (s, v) in rows {
        out.push_str(s);
        for x in v {
            out.push('\t');
            out.push_str(&x.to_string());
        }
        out.push('\n');
    }
    out
}

/// A fresh alphabet of the same kind as `a` covering `a ∪ b`.
pub fn union_alphabet(a: &Alphabet, b: &Alphabet) -> Result<Alphabet, AcousticError> {
    let kind: UnitKind = a.kind();
    Ok(Alphabet::from_units(
        kind,
        a.symbols().skip(1).chain(b.symbols().skip(1)),
    )?)
}
