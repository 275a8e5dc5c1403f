use candle_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::net::{FlowNet, VectorField};
use super::path::{ot_path, ot_target_field, FlowCondition};
use crate::error::{Error, Result};
use crate::features::MelSpectrogram;
use crate::lm::TrainLogRow;
use crate::nn::adamw::warmup_lr;
use crate::nn::{device, step_batch, AdamW, AdamWConfig};
use crate::seed::derive_seed;

/// One training pair: the condition and the clean concatenation `[X₁, Y₁]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowExample {
    pub cond: FlowCondition,
    pub z1: MelSpectrogram,
}

impl FlowExample {
    pub fn new(cond: FlowCondition, target_mel: &MelSpectrogram) -> Result<Self> {
        cond.validate()?;
        if target_mel.n_frames != cond.target_frames() || target_mel.n_bins != cond.guide.n_bins {
            return Err(Error::ShapeMismatch(format!(
                "target mel {}x{} vs target region {}x{}",
                target_mel.n_frames,
                target_mel.n_bins,
                cond.target_frames(),
                cond.guide.n_bins
            )));
        }
        let z1 = cond.guide.slice(0, cond.boundary).concat(target_mel)?;
        Ok(Self { cond, z1 })
    }

    pub fn z1_tensor(&self) -> Result<Tensor> {
        Ok(Tensor::from_vec(self.z1.data.clone(), (self.z1.n_frames, self.z1.n_bins), &device())?)
    }
}

/// A noise draw, a time and the clean data for one loss term.
#[derive(Debug, Clone)]
pub struct FlowBatch<'a> {
    pub z0: Tensor,
    pub z1: Tensor,
    pub t: f64,
    pub cond: &'a FlowCondition,
}

impl<'a> FlowBatch<'a> {
    /// Draws `t ~ U[0, 1]` and standard normal `z0` from `rng`.
    pub fn draw(example: &'a FlowExample, rng: &mut ChaCha8Rng) -> Result<Self> {
        let t = rng.random::<f64>();
        let n = example.z1.data.len();
        let z0: Vec<f64> = (0..n).map(|_| Distribution::<f64>::sample(&StandardNormal, rng)).collect();
        Ok(Self {
            z0: Tensor::from_vec(z0, (example.z1.n_frames, example.z1.n_bins), &device())?,
            z1: example.z1_tensor()?,
            t,
            cond: &example.cond,
        })
    }
}

/// Mean over the batch of the mean absolute deviation between the target
/// field and the model's field, taken over every frame and bin of both regions.
pub fn cfm_loss(field: &impl VectorField, batch: &[FlowBatch<'_>], sigma_min: f64) -> Result<Tensor> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("flow batch"));
    }
    let mut total: Option<Tensor> = None;
    for b in batch {
        let phi = ot_path(&b.z0, &b.z1, b.t, sigma_min)?;
        let omega = ot_target_field(&b.z0, &b.z1, sigma_min)?;
        let nu = field.field(&phi, b.t, b.cond)?;
        let term = (omega - nu)?.abs()?.mean_all()?;
        total = Some(match total {
            Some(acc) => (acc + term)?,
            None => term,
        });
    }
    Ok((total.expect("non-empty") / batch.len() as f64)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowTrainConfig {
    pub lr: f64,
    pub warmup: u64,
    pub epochs: usize,
    pub batch: usize,
    pub adamw: AdamWConfig,
    pub checkpoint_every: u64,
}

impl Default for FlowTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            warmup: 25,
            epochs: 10,
            batch: 8,
            adamw: AdamWConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl FlowTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("batch and lr must be positive".into()));
        }
        Ok(())
    }
}

/// Trains `net` in place. Noise and times for example `i` of step `s` come
/// from their own stream, so resuming replays an uninterrupted run exactly.
pub fn train_flow(
    net: &FlowNet,
    examples: &[FlowExample],
    config: &FlowTrainConfig,
    seed: u64,
    resume: Option<AdamW>,
    mut on_checkpoint: impl FnMut(&FlowNet, &AdamW) -> Result<()>,
) -> Result<(Vec<TrainLogRow>, AdamW)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("flow training examples"));
    }
    let mut opt = resume.unwrap_or_else(|| AdamW::new(config.adamw.clone()));
    let total = examples.len().div_ceil(config.batch) as u64 * config.epochs as u64;
    let mut log = Vec::new();
    while opt.step < total {
        let step = opt.step;
        let step_seed = derive_seed(seed ^ 0xF10F, step);
        let batch = step_batch(examples.len(), config.batch, seed, step)
            .into_iter()
            .map(|i| FlowBatch::draw(&examples[i], &mut ChaCha8Rng::seed_from_u64(derive_seed(step_seed, i as u64))))
            .collect::<Result<Vec<_>>>()?;
        let loss = cfm_loss(net, &batch, net.config.sigma_min)?;
        let loss_value = loss.to_scalar::<f64>()?;
        let lr = warmup_lr(config.lr, config.warmup, step);
        opt.step(&net.params, &loss.backward()?, lr)?;
        tracing::debug!(step, loss = loss_value, lr, "flow step");
        log.push(TrainLogRow {
            step: opt.step,
            loss: loss_value,
            lr,
        });
        if config.checkpoint_every > 0 && opt.step % config.checkpoint_every == 0 && opt.step < total {
            on_checkpoint(net, &opt)?;
        }
    }
    on_checkpoint(net, &opt)?;
    Ok((log, opt))
}
