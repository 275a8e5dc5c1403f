//! Guided conditional flow matching from semantic tokens to log-mel frames.
//!
//! The model regresses a vector field over the concatenation of the original
//! and target mel sequences. The original's clean mel is visible as guidance
//! while the target region of the guide is masked out.

pub(crate) mod net;
mod path;
mod sample;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::MelSpectrogram;

pub use net::{FlowNet, VectorField};
pub use path::{build_condition, ot_path, ot_target_field, FlowCondition};
pub use sample::{sample, sample_full};
pub use train::{cfm_loss, train_flow, FlowBatch, FlowExample, FlowTrainConfig};

pub const FLOW_KIND: &str = "flow";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub sigma_min: f64,
    pub width: usize,
    pub blocks: usize,
    /// Temporal kernel size of every convolution.
    pub kernel: usize,
    pub token_dim: usize,
    pub time_dim: usize,
    pub ode_steps: usize,
    /// Value written into the masked target region of the guide.
    pub fill_value: f64,
    pub n_bins: usize,
    pub speaker_dim: usize,
    pub codebook_size: usize,
    /// Frames per semantic token.
    pub downsample: usize,
    /// Affine normalisation applied to mels inside the network.
    pub data_mean: f64,
    pub data_std: f64,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            sigma_min: 1e-4,
            width: 128,
            blocks: 4,
            kernel: 3,
            token_dim: 32,
            time_dim: 32,
            ode_steps: 10,
            fill_value: 1e-5f64.ln(),
            n_bins: 80,
            speaker_dim: 80,
            codebook_size: 16,
            downsample: 2,
            data_mean: 0.0,
            data_std: 1.0,
            seed: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("flow: {m}")));
        if !(0.0..=0.1).contains(&self.sigma_min) {
            return bad("sigma_min must lie in [0, 0.1]");
        }
        if self.ode_steps == 0 {
            return bad("at least one ODE step is required");
        }
        if self.width == 0 || self.kernel % 2 == 0 || self.time_dim < 2 {
            return bad("width must be positive, kernel odd and time_dim >= 2");
        }
        if self.n_bins == 0 || self.speaker_dim == 0 || self.codebook_size == 0 || self.downsample == 0 {
            return bad("bins, speaker dim, codebook size and downsample must be positive");
        }
        if !(self.data_std > 0.0) || !self.data_mean.is_finite() || !self.fill_value.is_finite() {
            return bad("data statistics and fill value must be finite with positive std");
        }
        Ok(())
    }

    /// Sets the normalisation constants to the pooled mean and standard
    /// deviation of `mels`.
    pub fn with_data_stats<'a>(mut self, mels: impl IntoIterator<Item = &'a MelSpectrogram>) -> Result<Self> {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        for m in mels {
            for &v in &m.data {
                n += 1;
                sum += v;
                sq += v * v;
            }
        }
        if n == 0 {
            return Err(Error::EmptyInput("mels for flow statistics"));
        }
        let mean = sum / n as f64;
        self.data_mean = mean;
        self.data_std = (sq / n as f64 - mean * mean).max(1e-6).sqrt();
        Ok(self)
    }
}
