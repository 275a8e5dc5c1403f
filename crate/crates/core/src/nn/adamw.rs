use std::collections::BTreeMap;

use candle_core::backprop::GradStore;
use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::{HostTensor, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            clip_norm: 1.0,
        }
    }
}

/// Decoupled-weight-decay Adam whose moments can be exported for exact resumption.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Applies one update and returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore, lr: f64) -> Result<f64> {
        let mut found = Vec::new();
        let mut sq = 0.0;
        for (name, var) in params.vars() {
            if let Some(g) = grads.get(var.as_tensor()) {
                sq += g.sqr()?.sum_all()?.to_scalar::<f64>()?;
                found.push((name.clone(), var, g.clone()));
            }
        }
        let norm = sq.sqrt();
        if !norm.is_finite() {
            return Err(Error::Precondition(format!("non-finite gradient norm at step {}", self.step)));
        }
        let scale = if self.config.clip_norm > 0.0 && norm > self.config.clip_norm {
            self.config.clip_norm / norm
        } else {
            1.0
        };
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (name, var, g) in found {
            let g = (g.detach() * scale)?;
            let m = match self.m.get(&name) {
                Some(m) => ((m * c.beta1)? + (&g * (1.0 - c.beta1))?)?,
                None => (&g * (1.0 - c.beta1))?,
            };
            let v = match self.v.get(&name) {
                Some(v) => ((v * c.beta2)? + (g.sqr()? * (1.0 - c.beta2))?)?,
                None => (g.sqr()? * (1.0 - c.beta2))?,
            };
            let update = ((&m / bc1)? / ((&v / bc2)?.sqrt()? + c.eps)?)?;
            let p = var.as_tensor().detach();
            let decayed = (p * (1.0 - lr * c.weight_decay))?;
            var.set(&(decayed - (update * lr)?)?)?;
            self.m.insert(name.clone(), m);
            self.v.insert(name, v);
        }
        Ok(norm)
    }

    pub fn export_state(&self) -> Result<BTreeMap<String, HostTensor>> {
        let mut out = BTreeMap::new();
        for (k, t) in &self.m {
            out.insert(format!("m/{k}"), HostTensor::from_tensor(t)?);
        }
        for (k, t) in &self.v {
            out.insert(format!("v/{k}"), HostTensor::from_tensor(t)?);
        }
        Ok(out)
    }

    pub fn import_state(&mut self, step: u64, state: &BTreeMap<String, HostTensor>) -> Result<()> {
        self.step = step;
        self.m.clear();
        self.v.clear();
        for (k, h) in state {
            let t = h.to_tensor()?;
            if let Some(name) = k.strip_prefix("m/") {
                self.m.insert(name.to_string(), t);
            } else if let Some(name) = k.strip_prefix("v/") {
                self.v.insert(name.to_string(), t);
            } else {
                return Err(Error::Checkpoint(format!("unknown optimiser entry {k}")));
            }
        }
        Ok(())
    }
}

/// Linear warmup to `peak`, then constant.
pub fn warmup_lr(peak: f64, warmup: u64, step: u64) -> f64 {
    if warmup == 0 {
        peak
    } else {
        peak * ((step + 1) as f64 / warmup as f64).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn minimises_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamStore::new();
        let w = p.normal("w", &[4], 1.0, &mut rng).unwrap();
        let mut opt = AdamW::new(AdamWConfig::default());
        for _ in 0..500 {
            let loss = (&w - 3.0).unwrap().sqr().unwrap().sum_all().unwrap();
            opt.step(&p, &loss.backward().unwrap(), 0.05).unwrap();
        }
        for v in p.flat_values().unwrap() {
            assert!((v - 3.0).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ParamStore::new();
        let w = p.constant("w", &[2], 1.0).unwrap();
        let mut opt = AdamW::new(AdamWConfig {
            clip_norm: 0.0,
            ..Default::default()
        });
        let loss = (&w * 5.0).unwrap().sum_all().unwrap();
        opt.step(&p, &loss.backward().unwrap(), 0.1).unwrap();
        for v in p.flat_values().unwrap() {
            assert!((v - 0.9).abs() < 1e-6);
        }
    }

    #[test]
    fn state_round_trip_resumes_identically() {
        let run = |split: Option<usize>| {
            let mut p = ParamStore::new();
            let w = p.constant("w", &[3], 0.0).unwrap();
            let mut opt = AdamW::new(AdamWConfig::default());
            for i in 0..10 {
                if Some(i) == split {
                    let st = opt.export_state().unwrap();
                    let mut fresh = AdamW::new(AdamWConfig::default());
                    fresh.import_state(opt.step, &st).unwrap();
                    opt = fresh;
                }
                let loss = (&w - 2.0).unwrap().sqr().unwrap().sum_all().unwrap();
                opt.step(&p, &loss.backward().unwrap(), 0.1).unwrap();
            }
            p.flat_values().unwrap()
        };
        assert_eq!(run(None), run(Some(4)));
    }

    #[test]
    fn warmup_schedule() {
        assert_eq!(warmup_lr(1.0, 4, 0), 0.25);
        assert_eq!(warmup_lr(1.0, 4, 3), 1.0);
        assert_eq!(warmup_lr(1.0, 4, 10), 1.0);
        assert_eq!(warmup_lr(0.5, 0, 0), 0.5);
    }
}
