use candle_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::net::VectorField;
use super::path::FlowCondition;
use crate::error::{Error, Result};
use crate::features::MelSpectrogram;
use crate::nn::device;

/// Euler integration of `dz/dt = ν(z, t)` from standard normal noise at
/// `t = 0` to `t = 1` over the whole concatenated sequence.
pub fn sample_full(field: &impl VectorField, cond: &FlowCondition, steps: usize, seed: u64) -> Result<MelSpectrogram> {
    cond.validate()?;
    if steps == 0 {
        return Err(Error::InvalidConfig("at least one ODE step is required".into()));
    }
    let (t_z, bins) = (cond.n_frames(), cond.guide.n_bins);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..t_z * bins)
        .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let mut z = Tensor::from_vec(noise, (t_z, bins), &device())?;
    let dt = 1.0 / steps as f64;
    for k in 0..steps {
        let v = field.field(&z, k as f64 * dt, cond)?.detach();
        z = (z + (v * dt)?)?;
    }
    let data = z.flatten_all()?.to_vec1::<f64>()?;
    MelSpectrogram::from_data(data, bins, cond.guide.frame_rate_hz, cond.guide.config_id.clone())
}

/// Target region of [`sample_full`], `r·|μ_Y|` frames.
pub fn sample(field: &impl VectorField, cond: &FlowCondition, steps: usize, seed: u64) -> Result<MelSpectrogram> {
    let full = sample_full(field, cond, steps, seed)?;
    Ok(full.slice(cond.boundary, cond.n_frames()))
}
