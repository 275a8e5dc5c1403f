//! Parameter storage, initialisation and shared layers on top of candle.
//! Everything runs in f64 on the CPU.

pub mod adamw;
pub mod checkpoint;
pub mod ops;

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adamw::{AdamW, AdamWConfig};
pub use checkpoint::{Checkpoint, HostTensor};

pub const DTYPE: DType = DType::F64;

pub fn device() -> Device {
    Device::Cpu
}

/// Named trainable tensors, iterated in name order.
#[derive(Debug, Default, Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn insert(&mut self, name: &str, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        if self.vars.contains_key(name) {
            return Err(Error::InvalidConfig(format!("duplicate parameter {name}")));
        }
        let var = Var::from_tensor(&Tensor::from_vec(data, shape, &device())?)?;
        let t = var.as_tensor().clone();
        self.vars.insert(name.to_string(), var);
        Ok(t)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| std * Distribution::<f64>::sample(&StandardNormal, rng))
            .collect::<Vec<f64>>();
        self.insert(name, data, shape)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, data, shape)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Tensor> {
        self.insert(name, vec![value; shape.iter().product()], shape)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.vars
            .get(name)
            .map(Var::as_tensor)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.vars.keys()
    }

    pub fn n_params(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn to_host(&self) -> Result<BTreeMap<String, HostTensor>> {
        self.vars
            .iter()
            .map(|(k, v)| Ok((k.clone(), HostTensor::from_tensor(v.as_tensor())?)))
            .collect()
    }

    /// Overwrites every parameter from `host`; names and shapes must match exactly.
    pub fn load_host(&self, host: &BTreeMap<String, HostTensor>) -> Result<()> {
        if host.len() != self.vars.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: checkpoint has {}, model has {}",
                host.len(),
                self.vars.len()
            )));
        }
        for (name, var) in &self.vars {
            let h = host
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint lacks parameter {name}")))?;
            if h.shape != var.dims() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    h.shape,
                    var.dims()
                )));
            }
            var.set(&h.to_tensor()?)?;
        }
        Ok(())
    }

    /// Flat view of all parameter values in name order.
    pub fn flat_values(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_params());
        for v in self.vars.values() {
            out.extend(v.as_tensor().flatten_all()?.to_vec1::<f64>()?);
        }
        Ok(out)
    }
}

/// `x @ w + b` over the last dimension, with `w` stored as `(in, out)`.
pub fn linear(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let dims = x.dims().to_vec();
    let y = if dims.len() > 2 {
        let rows: usize = dims[..dims.len() - 1].iter().product();
        let mut out = dims.clone();
        *out.last_mut().unwrap() = w.dim(1)?;
        x.reshape((rows, dims[dims.len() - 1]))?.matmul(w)?.reshape(out)?
    } else {
        x.matmul(w)?
    };
    Ok(match b {
        Some(b) => y.broadcast_add(b)?,
        None => y,
    })
}

/// Same-padded 1-D convolution over the rows of `x` (`T x C`), written as
/// an unfold followed by a matmul. `w` is `(k·C) x O`, taps ordered oldest first.
pub fn temporal_conv(x: &Tensor, w: &Tensor, b: Option<&Tensor>, k: usize) -> Result<Tensor> {
    let (t, c) = x.dims2()?;
    if k % 2 == 0 || w.dim(0)? != k * c {
        return Err(Error::ShapeMismatch(format!("kernel {k} over {c} channels vs weight {:?}", w.dims())));
    }
    let pad = k / 2;
    let x = if pad > 0 {
        let z = Tensor::zeros((pad, c), DTYPE, x.device())?;
        Tensor::cat(&[&z, x, &z], 0)?
    } else {
        x.clone()
    };
    let taps = (0..k).map(|j| x.narrow(0, j, t)).collect::<candle_core::Result<Vec<_>>>()?;
    linear(&Tensor::cat(&taps, 1)?, w, b)
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let xc = x.broadcast_sub(&mean)?;
    let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
    let xn = xc.broadcast_div(&(var + eps)?.sqrt()?)?;
    Ok(xn.broadcast_mul(gamma)?.broadcast_add(beta)?)
}

pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    let shifted = x.broadcast_sub(&x.max_keepdim(D::Minus1)?.detach())?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let shifted = x.broadcast_sub(&x.max_keepdim(D::Minus1)?.detach())?;
    let e = shifted.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

/// Sinusoidal features of scalar times, shape `(len(t), dim)`.
pub fn sinusoidal(t: &[f64], dim: usize, scale: f64) -> Result<Tensor> {
    let half = dim / 2;
    let mut data = Vec::with_capacity(t.len() * dim);
    for &x in t {
        for k in 0..dim {
            let j = k % half.max(1);
            let freq = (-(10_000f64.ln()) * j as f64 / half.max(1) as f64).exp();
            let a = scale * x * freq;
            data.push(if k < half { a.sin() } else { a.cos() });
        }
    }
    Ok(Tensor::from_vec(data, (t.len(), dim), &device())?)
}

/// Example order for one epoch, reproducible from `(seed, epoch)` alone.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, epoch)));
    order
}

/// Example indices of training step `step` when `n` examples are cut into
/// batches of `batch` per epoch.
pub fn step_batch(n: usize, batch: usize, seed: u64, step: u64) -> Vec<usize> {
    let per_epoch = n.div_ceil(batch) as u64;
    let order = epoch_order(n, seed, step / per_epoch);
    let k = (step % per_epoch) as usize * batch;
    order[k..(k + batch).min(n)].to_vec()
}

const ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter, analytic and numeric value at the worst entry.
    pub worst: Option<(String, f64, f64)>,
}

/// Compares autodiff gradients of `loss` against central differences on
/// `fraction` of the parameters (at least one per tensor).
/// Central-difference check on a random `fraction` of every parameter.
/// Relative errors use `max(|analytic|, |numeric|, 1e-6)` as denominator so
/// that entries whose gradient is below the difference noise do not dominate.
pub fn gradient_check(
    params: &ParamStore,
    loss: impl Fn() -> Result<Tensor>,
    fraction: f64,
    step: f64,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport> {
    let grads = loss()?.backward()?;
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: None,
    };
    for (name, var) in params.vars() {
        let shape = var.dims().to_vec();
        let base = var.as_tensor().flatten_all()?.to_vec1::<f64>()?;
        let g = grads
            .get(var.as_tensor())
            .map(|g| g.flatten_all()?.to_vec1::<f64>())
            .transpose()?
            .unwrap_or_else(|| vec![0.0; base.len()]);
        let n = ((base.len() as f64 * fraction).ceil() as usize).clamp(1, base.len());
        for _ in 0..n {
            let i = rng.random_range(0..base.len());
            let eval = |delta: f64| -> Result<f64> {
                let mut v = base.clone();
                v[i] += delta;
                var.set(&Tensor::from_vec(v, shape.as_slice(), &device())?)?;
                Ok(loss()?.to_scalar::<f64>()?)
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            var.set(&Tensor::from_vec(base.clone(), shape.as_slice(), &device())?)?;
            let denom = numeric.abs().max(g[i].abs()).max(ABS_FLOOR);
            let rel = (numeric - g[i]).abs() / denom;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((format!("{name}[{i}]"), g[i], numeric));
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
