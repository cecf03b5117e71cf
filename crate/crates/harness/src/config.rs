//! Configuration schemas. Files are TOML; every field has a default, so a
//! config only needs to name what it changes.

use std::path::{Path, PathBuf};

use phonoglot::acoustic::{EncoderConfig, InitMode, TrainSchedule};
use phonoglot::ctc::DEFAULT_BEAM;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Synthetic multilingual world. Counts are utterances, not hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub universal_inventory_size: usize,
    pub num_seen_languages: usize,
    pub num_unseen: usize,
    /// Universal phonemes withheld from every seen language.
    pub reserved_novel_phonemes: usize,
    /// How many reserved phonemes each unseen language uses.
    pub novel_per_unseen: usize,
    pub inventory_size: (usize, usize),
    pub lexicon_size: (usize, usize),
    pub word_length: (usize, usize),
    pub sentence_length: (usize, usize),
    /// Utterances of the best- and worst-resourced seen languages; the
    /// others are spaced geometrically in between.
    pub seen_utterances: (usize, usize),
    pub unseen_utterances: usize,
    pub frames_per_phoneme: (usize, usize),
    pub feature_dim: usize,
    /// Std of each prototype coordinate.
    pub prototype_std: f64,
    pub noise_std: f64,
    /// Fraction of lexicon entries that are spelling variants of another
    /// word's pronunciation.
    pub homophone_rate: f64,
    /// Exponent of the Zipfian word distribution.
    pub zipf_exponent: f64,
    /// Train/dev/test fractions; test takes the remainder.
    pub split: (f64, f64),
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            universal_inventory_size: 40,
            num_seen_languages: 6,
            num_unseen: 2,
            reserved_novel_phonemes: 4,
            novel_per_unseen: 2,
            inventory_size: (18, 24),
            lexicon_size: (60, 90),
            word_length: (2, 4),
            sentence_length: (2, 4),
            seen_utterances: (600, 80),
            unseen_utterances: 300,
            frames_per_phoneme: (2, 5),
            feature_dim: 16,
            prototype_std: 1.0,
            noise_std: 0.9,
            homophone_rate: 0.05,
            zipf_exponent: 1.0,
            split: (0.8, 0.1),
            seed: 1,
        }
    }
}

fn check_range(name: &str, r: (usize, usize)) -> Result<(), HarnessError> {
    if r.0 == 0 || r.0 > r.1 {
        return Err(HarnessError::Config(format!(
            "{name} must be a non-empty positive range, got {r:?}"
        )));
    }
    Ok(())
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        check_range("inventory_size", self.inventory_size)?;
        check_range("lexicon_size", self.lexicon_size)?;
        check_range("word_length", self.word_length)?;
        check_range("sentence_length", self.sentence_length)?;
        check_range("frames_per_phoneme", self.frames_per_phoneme)?;
        let seen_pool = self
            .universal_inventory_size
            .checked_sub(self.reserved_novel_phonemes)
            .ok_or_else(|| HarnessError::Config("more reserved phonemes than universal ones".into()))?;
        if self.inventory_size.1 > seen_pool {
            return Err(HarnessError::Config(format!(
                "inventory size {} exceeds the {seen_pool} phonemes available to seen languages",
                self.inventory_size.1
            )));
        }
        if self.novel_per_unseen > self.reserved_novel_phonemes
            || self.novel_per_unseen >= self.inventory_size.0
        {
            return Err(HarnessError::Config("novel_per_unseen too large".into()));
        }
        if self.num_seen_languages == 0 {
            return Err(HarnessError::Config("need at least one seen language".into()));
        }
        if self.seen_utterances.0 < self.seen_utterances.1 || self.seen_utterances.1 < 10 {
            return Err(HarnessError::Config(
                "seen_utterances must be (max, min) with min >= 10".into(),
            ));
        }
        if self.num_unseen > 0 && self.unseen_utterances < 10 {
            return Err(HarnessError::Config("unseen_utterances must be >= 10".into()));
        }
        if self.feature_dim == 0 {
            return Err(HarnessError::Config("feature_dim must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.prototype_std > 0.0) {
            return Err(HarnessError::Config("noise_std >= 0 and prototype_std > 0 required".into()));
        }
        if !(0.0..0.5).contains(&self.homophone_rate) {
            return Err(HarnessError::Config("homophone_rate must be in [0, 0.5)".into()));
        }
        let (tr, dv) = self.split;
        if !(tr > 0.0 && dv >= 0.0 && tr + dv < 1.0) {
            return Err(HarnessError::Config(format!("bad split {:?}", self.split)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Monolingual,
    MultilingualPhoneme,
    MultilingualSubword,
    CrosslingualFt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    Phoneme,
    Subword,
}

/// Finetuning data size: a number of utterances or the whole training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scale {
    Utterances(usize),
    All(AllMarker),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllMarker {
    All,
}

impl Scale {
    pub fn label(&self) -> String {
        match self {
            Scale::Utterances(n) => n.to_string(),
            Scale::All(_) => "all".into(),
        }
    }

    pub fn take(&self, available: usize) -> usize {
        match self {
            Scale::Utterances(n) => (*n).min(available),
            Scale::All(_) => available,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// Prefix beam search width.
    pub beam: usize,
    /// Histogram beam of T∘L∘G Viterbi decoding (active tokens per frame).
    pub graph_beam: usize,
    /// Score beam of T∘L∘G decoding, in cost units.
    pub score_beam: f64,
    pub acoustic_scale: f64,
    pub lm_order: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam: DEFAULT_BEAM,
            graph_beam: 256,
            score_beam: 30.0,
            acoustic_scale: 1.0,
            lm_order: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub schedule: TrainSchedule,
    /// Schedule used when finetuning a pretrained model.
    pub finetune: TrainSchedule,
    /// BPE vocabulary (subwords + `<s>` + `<unk>`) of single-language tokenizers.
    pub bpe_vocab_size: usize,
    /// BPE vocabulary of the tokenizer shared by all seen languages.
    pub bpe_multilingual_vocab_size: usize,
    /// Language-balancing exponent for the multilingual BPE sample.
    pub bpe_beta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                input_dim: WorldConfig::default().feature_dim,
                hidden_dim: 64,
                num_blocks: 1,
                subsample_stride: 2,
                kernel_width: 4,
                dropout: 0.1,
            },
            schedule: TrainSchedule {
                peak_lr: 4e-3,
                total_steps: 1200,
                batch_size: 8,
                early_stop_patience: 10,
                ..Default::default()
            },
            finetune: TrainSchedule {
                peak_lr: 2e-3,
                total_steps: 300,
                batch_size: 8,
                early_stop_patience: 10,
                ..Default::default()
            },
            bpe_vocab_size: 120,
            bpe_multilingual_vocab_size: 320,
            bpe_beta: phonoglot::bpe::DEFAULT_BETA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub mode: Mode,
    pub supervision: Supervision,
    /// Monolingual target, or the unseen language for crosslingual runs.
    /// Defaults to the lowest-resource seen / first unseen language.
    pub language: Option<String>,
    pub ft_data_scales: Vec<Scale>,
    /// Output-layer initialization for finetuning; defaults per supervision
    /// (phoneme → copy_shared, subword → random_all).
    pub init_mode: Option<InitMode>,
    /// Pretrained checkpoint to finetune (required by crosslingual_ft).
    pub pretrained: Option<PathBuf>,
    /// Also finetune on `forgetting_ft_utterances`, evaluate the seen
    /// languages before and after, and report WARD.
    pub forgetting: bool,
    pub forgetting_ft_utterances: usize,
    /// Splits decoded and scored for every evaluated language.
    pub eval_splits: Vec<String>,
    /// Crosslingual runs also train the target from random init.
    pub from_scratch_baseline: bool,
    pub model: ModelConfig,
    pub decode: DecodeConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            id: "exp".into(),
            mode: Mode::MultilingualPhoneme,
            supervision: Supervision::Phoneme,
            language: None,
            ft_data_scales: vec![
                Scale::Utterances(50),
                Scale::Utterances(200),
                Scale::All(AllMarker::All),
            ],
            init_mode: None,
            pretrained: None,
            forgetting: false,
            forgetting_ft_utterances: 20,
            eval_splits: vec!["dev".into(), "test".into()],
            from_scratch_baseline: false,
            model: ModelConfig::default(),
            decode: DecodeConfig::default(),
            seed: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model.encoder.validate()?;
        self.model.schedule.validate()?;
        self.model.finetune.validate()?;
        if self.mode == Mode::CrosslingualFt {
            if self.pretrained.is_none() {
                return Err(HarnessError::Config(
                    "crosslingual_ft requires a pretrained checkpoint path".into(),
                ));
            }
            if self.ft_data_scales.is_empty() && !self.forgetting {
                return Err(HarnessError::Config(
                    "crosslingual_ft needs ft_data_scales or a forgetting run".into(),
                ));
            }
        } else if self.forgetting {
            return Err(HarnessError::Config("forgetting runs are crosslingual_ft only".into()));
        }
        if self.forgetting && self.forgetting_ft_utterances == 0 {
            return Err(HarnessError::Config("forgetting_ft_utterances must be positive".into()));
        }
        if let Some(s) = self
            .eval_splits
            .iter()
            .find(|s| !crate::world::SPLITS.contains(&s.as_str()))
        {
            return Err(HarnessError::Config(format!("unknown split {s:?}")));
        }
        if self.ft_data_scales.contains(&Scale::Utterances(0)) {
            return Err(HarnessError::Config("ft_data_scales entries must be positive".into()));
        }
        let mut labels: Vec<String> = self.ft_data_scales.iter().map(Scale::label).collect();
        labels.sort();
        labels.dedup();
        if labels.len() != self.ft_data_scales.len() {
            return Err(HarnessError::Config("duplicate ft_data_scales entry".into()));
        }
        if let Some(p) = &self.pretrained {
            if !p.exists() {
                return Err(HarnessError::Config(format!(
                    "pretrained checkpoint {} does not exist",
                    p.display()
                )));
            }
        }
        if self.decode.beam == 0 || self.decode.graph_beam == 0 || self.decode.lm_order == 0 {
            return Err(HarnessError::Config("decode beam and lm_order must be positive".into()));
        }
        Ok(())
    }

    pub fn init_mode(&self) -> InitMode {
        self.init_mode.unwrap_or(match self.supervision {
            Supervision::Phoneme => InitMode::CopyShared,
            Supervision::Subword => InitMode::RandomAll,
        })
    }
}

pub fn load_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}
