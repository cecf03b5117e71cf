//! Experiment reports and their files: `results.csv` (one metric value per
//! row), `history.csv` (per-epoch training curves) and `report.json`
//! (everything, including the config that produced it).

use std::fmt::Write as _;
use std::path::Path;

use phonoglot::acoustic::EpochStats;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::HarnessError;

/// Pseudo-language of rows averaged over languages (mean of rates).
pub const MACRO_AVG: &str = "macro_avg";
/// Pseudo-language of rows pooled over languages (Σ errors / Σ length).
pub const POOLED_AVG: &str = "pooled_avg";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    /// Pipeline that produced the model: `monolingual`, `multilingual_phoneme`,
    /// `multilingual_subword`, `crosslingual_ft`, `from_scratch`, `pretrained`
    /// or `forgetting`.
    pub mode: String,
    /// Training-data scale: `all`, an utterance count, or `none` for an
    /// evaluated-only pretrained model.
    pub scale: String,
    pub language: String,
    pub split: String,
    /// `per`, `wer`, `wer_lexfree` or `ward`, all in percent.
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub mode: String,
    pub scale: String,
    pub train_utterances: usize,
    pub epochs_to_converge: usize,
    pub epochs_run: usize,
    pub early_stopped: bool,
    pub initial_train_loss: f64,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
    pub skipped_utterances: usize,
    pub decode_failures: usize,
    pub checkpoint: Option<String>,
    #[serde(skip)]
    pub history: Vec<EpochStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageForgetting {
    pub language: String,
    pub wer_before: f64,
    pub wer_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingReport {
    pub ft_language: String,
    pub ft_utterances: usize,
    pub ft_wer: f64,
    pub languages: Vec<LanguageForgetting>,
    pub avg_wer_before: f64,
    pub avg_wer_after: f64,
    pub ward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub world_seed: u64,
    pub config: ExperimentConfig,
    pub results: Vec<ResultRow>,
    pub stages: Vec<StageReport>,
    pub forgetting: Option<ForgettingReport>,
}

impl Report {
    /// Looks up one metric value.
    pub fn value(&self, mode: &str, scale: &str, language: &str, split: &str, metric: &str) -> Option<f64> {
        self.results
            .iter()
            .find(|r| {
                r.mode == mode
                    && r.scale == scale
                    && r.language == language
                    && r.split == split
                    && r.metric == metric
            })
            .map(|r| r.value)
    }

    pub fn results_csv(&self) -> String {
        let mut out = String::from("experiment,mode,scale,language,split,metric,value\n");
        for r in &self.results {
            writeln!(
                out,
                "{},{},{},{},{},{},{:.6}",
                r.experiment, r.mode, r.scale, r.language, r.split, r.metric, r.value
            )
            .unwrap();
        }
        out
    }

    pub fn history_csv(&self) -> String {
        let mut out = String::from("experiment,stage,epoch,step,lr,train_loss,val_loss\n");
        for s in &self.stages {
            for e in &s.history {
                writeln!(
                    out,
                    "{},{},{},{},{:e},{:.6},{:.6}",
                    self.experiment, s.stage, e.epoch, e.step, e.lr, e.train_loss, e.val_loss
                )
                .unwrap();
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| HarnessError::Io(format!("serializing report: {e}")))?;
        for (name, text) in [
            ("results.csv", self.results_csv()),
            ("history.csv", self.history_csv()),
            ("report.json", json),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text)
                .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}
