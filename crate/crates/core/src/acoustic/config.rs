use serde::{Deserialize, Serialize};

use super::AcousticError;

/// Shape of the encoder: strided 1-D convolution followed by residual
/// feed-forward blocks with layer normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_blocks: usize,
    pub subsample_stride: usize,
    /// Number of input frames each convolution output sees.
    pub kernel_width: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_dim: 80,
            hidden_dim: 64,
            num_blocks: 2,
            subsample_stride: 2,
            kernel_width: 4,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), AcousticError> {
        let dims = [
            self.input_dim,
            self.hidden_dim,
            self.subsample_stride,
            self.kernel_width,
        ];
        if dims.contains(&0) {
            return Err(AcousticError::Config(
                "input_dim, hidden_dim, subsample_stride and kernel_width must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AcousticError::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Output frame count `ceil(T / stride)`.
    pub fn output_frames(&self, input_frames: usize) -> usize {
        input_frames.div_ceil(self.subsample_stride)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub peak_lr: f64,
    pub total_steps: usize,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    /// Best checkpoints averaged into the final model.
    pub avg_top_k: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss_normalization: crate::ctc::LossNormalization,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            peak_lr: 3e-3,
            total_steps: 2000,
            warmup_fraction: 0.10,
            batch_size: 8,
            early_stop_patience: 10,
            avg_top_k: 3,
            adam_beta1: 0.9,
            adam_beta2: 0.98,
            adam_eps: 1e-9,
            loss_normalization: crate::ctc::LossNormalization::InputLength,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<(), AcousticError> {
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return Err(AcousticError::Config(format!(
                "warmup_fraction must be in (0, 1), got {}",
                self.warmup_fraction
            )));
        }
        if self.total_steps == 0 || self.batch_size == 0 || self.avg_top_k == 0 {
            return Err(AcousticError::Config(
                "total_steps, batch_size and avg_top_k must be positive".into(),
            ));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return Err(AcousticError::Config("peak_lr must be positive".into()));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        ((self.warmup_fraction * self.total_steps as f64).round() as usize).max(1)
    }

    /// Noam schedule `peak · min(step / warmup, sqrt(warmup / step))`,
    /// which peaks at exactly `peak_lr` when `step = warmup`.
    pub fn lr(&self, step: usize) -> f64 {
        let step = step.max(1) as f64;
        let warm = self.warmup_steps() as f64;
        self.peak_lr * (step / warm).min((warm / step).sqrt())
    }
}
