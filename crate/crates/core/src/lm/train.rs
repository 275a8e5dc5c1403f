use candle_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EditorLm, LmInput};
use crate::error::{Error, Result};
use crate::nn::adamw::warmup_lr;
use crate::nn::{device, step_batch, AdamW, AdamWConfig};
use crate::seed::derive_seed;
use crate::sequence::LMTrainExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmTrainConfig {
    pub lr: f64,
    pub warmup: u64,
    pub epochs: usize,
    pub batch: usize,
    pub adamw: AdamWConfig,
    /// Invoke the checkpoint hook every this many steps; `0` only at the end.
    pub checkpoint_every: u64,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            warmup: 20,
            epochs: 10,
            batch: 8,
            adamw: AdamWConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl LmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("batch and lr must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_examples: usize) -> u64 {
        n_examples.div_ceil(self.batch) as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
}

/// Optimiser state carried across an interrupted run.
#[derive(Debug, Clone)]
pub struct LmTrainState {
    pub optimizer: AdamW,
}

/// Mean over the batch of `−1/(Y+1) Σ log q` over each example's supervised
/// positions. `logp` is `(B, T, V)` as returned by the forward pass.
pub fn lm_loss(logp: &Tensor, examples: &[&LMTrainExample]) -> Result<Tensor> {
    let (b, t, v) = logp.dims3()?;
    if b != examples.len() {
        return Err(Error::ShapeMismatch(format!("{b} rows for {} examples", examples.len())));
    }
    let mut weights = vec![0.0; b * t * v];
    for (r, e) in examples.iter().enumerate() {
        if e.loss_mask.len() != e.ids.len() || e.ids.len() > t {
            return Err(Error::ShapeMismatch(format!("example {r} does not fit the logits")));
        }
        if e.loss_mask.first() == Some(&true) {
            return Err(Error::ShapeMismatch("the first position cannot be supervised".into()));
        }
        let n = e.loss_mask.iter().filter(|&&m| m).count();
        if n == 0 {
            return Err(Error::ShapeMismatch(format!("example {r} has an empty loss mask")));
        }
        let w = 1.0 / (n as f64 * b as f64);
        for (p, &m) in e.loss_mask.iter().enumerate() {
            if m {
                let id = e.ids[p] as usize;
                if id >= v {
                    return Err(Error::VocabOutOfRange { id: e.ids[p], vocab: v });
                }
                weights[(r * t + p - 1) * v + id] = w;
            }
        }
    }
    let weights = Tensor::from_vec(weights, (b, t, v), &device())?;
    Ok((logp * weights)?.sum_all()?.neg()?)
}

/// Teacher-forced argmax hits and totals over supervised positions.
pub fn masked_accuracy(logp: &Tensor, examples: &[&LMTrainExample]) -> Result<(usize, usize)> {
    let pred = logp.argmax(candle_core::D::Minus1)?.to_vec2::<u32>()?;
    let (mut hit, mut total) = (0, 0);
    for (r, e) in examples.iter().enumerate() {
        for (p, &m) in e.loss_mask.iter().enumerate() {
            if m {
                total += 1;
                hit += usize::from(pred[r][p - 1] == e.ids[p]);
            }
        }
    }
    Ok((hit, total))
}

/// Teacher-forced training. Batches are drawn from a per-epoch shuffle seeded
/// from `seed`, so a run resumed at step `s` replays exactly the batches an
/// uninterrupted run would have seen.
pub fn train_lm(
    model: &EditorLm,
    examples: &[LMTrainExample],
    config: &LmTrainConfig,
    seed: u64,
    resume: Option<LmTrainState>,
    mut on_checkpoint: impl FnMut(&EditorLm, &AdamW) -> Result<()>,
) -> Result<(Vec<TrainLogRow>, AdamW)> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("training examples"));
    }
    let mut opt = match resume {
        Some(s) => s.optimizer,
        None => AdamW::new(config.adamw.clone()),
    };
    let per_epoch = config.steps_per_epoch(examples.len());
    let total = per_epoch * config.epochs as u64;
    let mut log = Vec::new();
    while opt.step < total {
        let step = opt.step;
        let batch: Vec<&LMTrainExample> = step_batch(examples.len(), config.batch, seed, step)
            .into_iter()
            .map(|i| &examples[i])
            .collect();
        let inputs: Vec<LmInput> = batch.iter().map(|e| LmInput::from(*e)).collect();
        let mut drop_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed ^ 0xD50F, step));
        let logp = model.forward_inner(&inputs, Some(&mut drop_rng))?;
        let loss = lm_loss(&logp, &batch)?;
        let loss_value = loss.to_scalar::<f64>()?;
        let lr = warmup_lr(config.lr, config.warmup, step);
        opt.step(&model.params, &loss.backward()?, lr)?;
        tracing::debug!(step, loss = loss_value, lr, "lm step");
        log.push(TrainLogRow {
            step: opt.step,
            loss: loss_value,
            lr,
        });
        if config.checkpoint_every > 0 && opt.step % config.checkpoint_every == 0 && opt.step < total {
            on_checkpoint(model, &opt)?;
        }
    }
    on_checkpoint(model, &opt)?;
    Ok((log, opt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{Segment, VocabLayout};

    fn example(ids: Vec<u32>, turn: usize) -> LMTrainExample {
        let n = ids.len();
        LMTrainExample {
            version: 1,
            layout: VocabLayout::new(2),
            segments: (0..n)
                .map(|p| if p <= turn { Segment::Text } else { Segment::TargetSpeech })
                .collect(),
            loss_mask: (0..n).map(|p| p > turn).collect(),
            ids,
            speaker: vec![1.0],
        }
    }

    fn logp(rows: Vec<Vec<f64>>) -> Tensor {
        let t = rows.len();
        let v = rows[0].len();
        let flat: Vec<f64> = rows.into_iter().flatten().map(f64::ln).collect();
        Tensor::from_vec(flat, (1, t, v), &device()).unwrap()
    }

    #[test]
    fn uniform_gives_ln_v() {
        let e = example(vec![0, 3, 1, 2, 0], 2);
        let l = lm_loss(&logp(vec![vec![0.25; 4]; 5]), &[&e]).unwrap();
        assert!((l.to_scalar::<f64>().unwrap() - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_gives_zero_and_half_gives_ln2() {
        let e = example(vec![0, 3, 1, 2, 0], 2);
        let mut rows = vec![vec![0.25; 4]; 5];
        rows[2] = vec![0.0, 0.0, 1.0, 0.0];
        rows[3] = vec![1.0, 0.0, 0.0, 0.0];
        let flat: Vec<f64> = rows.into_iter().flatten().map(|p: f64| p.max(1e-300).ln()).collect();
        let lp = Tensor::from_vec(flat, (1, 5, 4), &device()).unwrap();
        assert!(lm_loss(&lp, &[&e]).unwrap().to_scalar::<f64>().unwrap().abs() < 1e-12);

        let mut rows = vec![vec![0.25; 4]; 5];
        rows[2] = vec![0.5, 0.0, 0.5, 0.0];
        rows[3] = vec![0.5, 0.0, 0.5, 0.0];
        let flat: Vec<f64> = rows.into_iter().flatten().map(|p: f64| p.max(1e-300).ln()).collect();
        let lp = Tensor::from_vec(flat, (1, 5, 4), &device()).unwrap();
        let l = lm_loss(&lp, &[&e]).unwrap().to_scalar::<f64>().unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unsupervised_labels_do_not_matter() {
        let a = example(vec![0, 3, 1, 2, 0], 2);
        let b = example(vec![3, 0, 1, 2, 0], 2);
        let rows: Vec<Vec<f64>> = (0..5).map(|p| vec![0.1, 0.2, 0.3 + 0.01 * p as f64, 0.4 - 0.01 * p as f64]).collect();
        let lp = logp(rows);
        let la = lm_loss(&lp, &[&a]).unwrap().to_scalar::<f64>().unwrap();
        let lb = lm_loss(&lp, &[&b]).unwrap().to_scalar::<f64>().unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn steps_per_epoch_rounds_up() {
        let c = LmTrainConfig {
            batch: 3,
            ..Default::default()
        };
        assert_eq!(c.steps_per_epoch(8), 3);
    }
}
