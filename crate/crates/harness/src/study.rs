//! The desk-scale comparison study: one seed of multilingual vs monolingual
//! phoneme training, phoneme transfer vs random init on an unseen language,
//! and forgetting of phoneme- vs subword-pretrained models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode, Scale, Supervision};
use crate::experiment::run_experiment;
use crate::report::Report;
use crate::world::World;
use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub seed: u64,
    /// Lowest-resource seen language.
    pub low_resource_language: String,
    pub multilingual_per: f64,
    pub monolingual_per: f64,
    pub unseen_language: String,
    pub ft_utterances: usize,
    /// Phoneme PT + phoneme FT test WER.
    pub transfer_wer: f64,
    /// Random-init phoneme model on the same data.
    pub scratch_wer: f64,
    pub ward_phoneme: f64,
    pub ward_subword: f64,
}

fn metric(report: &Report, mode: &str, scale: &str, lang: &str, name: &str) -> Result<f64, HarnessError> {
    report
        .value(mode, scale, lang, "test", name)
        .ok_or_else(|| HarnessError::Config(format!("report lacks {mode}/{scale}/{lang}/{name}")))
}

fn ward_of(report: &Report) -> Result<f64, HarnessError> {
    report
        .forgetting
        .as_ref()
        .map(|f| f.ward)
        .ok_or_else(|| HarnessError::Config("forgetting report missing".into()))
}

/// Runs the five experiments of one study seed under `dir`. `base` supplies
/// the model, decoding and FT settings; mode-specific fields are overridden.
pub fn run_study(world: &World, base: &ExperimentConfig, seed: u64, dir: &Path) -> Result<StudyOutcome, HarnessError> {
    let ft_scale = base
        .ft_data_scales
        .first()
        .copied()
        .unwrap_or(Scale::Utterances(50));
    let cfg = |id: &str, mode: Mode, supervision: Supervision| ExperimentConfig {
        id: id.into(),
        mode,
        supervision,
        seed,
        output_dir: dir.join(id),
        eval_splits: vec!["test".into()],
        language: None,
        init_mode: None,
        pretrained: None,
        forgetting: false,
        from_scratch_baseline: false,
        ..base.clone()
    };
    let low = world.lowest_resource_seen().code.clone();
    let unseen = world
        .unseen()
        .next()
        .ok_or_else(|| HarnessError::Config("the study needs an unseen language".into()))?
        .code
        .clone();

    let multi = run_experiment(world, &cfg("pt-phoneme", Mode::MultilingualPhoneme, Supervision::Phoneme))?;
    let mono = run_experiment(
        world,
        &ExperimentConfig {
            language: Some(low.clone()),
            ..cfg("mono-phoneme", Mode::Monolingual, Supervision::Phoneme)
        },
    )?;
    run_experiment(world, &cfg("pt-subword", Mode::MultilingualSubword, Supervision::Subword))?;
    let ft_phoneme = run_experiment(
        world,
        &ExperimentConfig {
            pretrained: Some(dir.join("pt-phoneme").join("model.ckpt")),
            ft_data_scales: vec![ft_scale],
            from_scratch_baseline: true,
            forgetting: true,
            ..cfg("ft-phoneme", Mode::CrosslingualFt, Supervision::Phoneme)
        },
    )?;
    let ft_subword = run_experiment(
        world,
        &ExperimentConfig {
            pretrained: Some(dir.join("pt-subword").join("model.ckpt")),
            ft_data_scales: Vec::new(),
            forgetting: true,
            ..cfg("ft-subword", Mode::CrosslingualFt, Supervision::Subword)
        },
    )?;
    let label = ft_scale.label();
    let lang = world.language(&unseen)?;
    Ok(StudyOutcome {
        seed,
        multilingual_per: metric(&multi, "multilingual_phoneme", "all", &low, "per")?,
        monolingual_per: metric(&mono, "monolingual", "all", &low, "per")?,
        low_resource_language: low,
        ft_utterances: ft_scale.take(lang.train.len()),
        transfer_wer: metric(&ft_phoneme, "crosslingual_ft", &label, &unseen, "wer")?,
        scratch_wer: metric(&ft_phoneme, "from_scratch", &label, &unseen, "wer")?,
        unseen_language: unseen,
        ward_phoneme: ward_of(&ft_phoneme)?,
        ward_subword: ward_of(&ft_subword)?,
    })
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
