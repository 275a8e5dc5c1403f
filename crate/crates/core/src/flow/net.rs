use candle_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FlowCondition, FlowConfig, FLOW_KIND};
use crate::error::{Error, Result};
use crate::nn::{device, layer_norm, linear, sinusoidal, temporal_conv, Checkpoint, ParamStore};

/// Anything that can play the role of `ν_θ(z, t; condition)`.
pub trait VectorField {
    /// Field at state `z` (`T_Z x B`) and time `t`, same shape as `z`.
    fn field(&self, z: &Tensor, t: f64, cond: &FlowCondition) -> Result<Tensor>;
}

/// Residual 1-D convolution stack. Input channels are the normalised state,
/// the normalised guide and upsampled token embeddings; time and speaker
/// enter every block as a per-channel shift.
pub struct FlowNet {
    pub config: FlowConfig,
    pub params: ParamStore,
}

fn block_name(l: usize, p: &str) -> String {
    format!("blocks.{l:02}.{p}")
}

impl FlowNet {
    pub fn new(config: FlowConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let (w, k, b) = (config.width, config.kernel, config.n_bins);
        let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
        let c_in = 2 * b + config.token_dim;
        p.normal("tok_emb", &[config.codebook_size, config.token_dim], 1.0, &mut rng)?;
        p.normal("in.w", &[k * c_in, w], he(k * c_in), &mut rng)?;
        p.constant("in.b", &[w], 0.0)?;
        p.normal("time.w1", &[config.time_dim, w], he(config.time_dim), &mut rng)?;
        p.constant("time.b1", &[w], 0.0)?;
        p.normal("time.w2", &[w, w], he(w), &mut rng)?;
        p.constant("time.b2", &[w], 0.0)?;
        p.normal("spk.w", &[config.speaker_dim, w], 1.0 / (config.speaker_dim as f64).sqrt(), &mut rng)?;
        p.constant("spk.b", &[w], 0.0)?;
        for l in 0..config.blocks {
            let n = |s: &str| block_name(l, s);
            p.constant(&n("ln.g"), &[w], 1.0)?;
            p.constant(&n("ln.b"), &[w], 0.0)?;
            p.normal(&n("cond.w"), &[w, w], he(w), &mut rng)?;
            p.constant(&n("cond.b"), &[w], 0.0)?;
            p.normal(&n("c1.w"), &[k * w, w], he(k * w), &mut rng)?;
            p.constant(&n("c1.b"), &[w], 0.0)?;
            p.normal(&n("c2.w"), &[k * w, w], 0.1 * he(k * w), &mut rng)?;
            p.constant(&n("c2.b"), &[w], 0.0)?;
        }
        p.constant("out_ln.g", &[w], 1.0)?;
        p.constant("out_ln.b", &[w], 0.0)?;
        p.normal("out.w", &[w, b], 0.02, &mut rng)?;
        p.constant("out.b", &[b], 0.0)?;
        Ok(Self { config, params: p })
    }

    fn p(&self, name: &str) -> Result<&Tensor> {
        self.params.get(name)
    }

    fn check(&self, z: &Tensor, cond: &FlowCondition) -> Result<()> {
        let c = &self.config;
        cond.validate()?;
        if cond.downsample != c.downsample || cond.guide.n_bins != c.n_bins || cond.speaker.dim() != c.speaker_dim {
            return Err(Error::ShapeMismatch(format!(
                "condition (r={}, bins={}, speaker={}) does not match the model",
                cond.downsample,
                cond.guide.n_bins,
                cond.speaker.dim()
            )));
        }
        if z.dims() != [cond.n_frames(), c.n_bins] {
            return Err(Error::ShapeMismatch(format!(
                "state {:?} vs condition {}x{}",
                z.dims(),
                cond.n_frames(),
                c.n_bins
            )));
        }
        if let Some(&bad) = cond.tokens.iter().find(|&&t| t as usize >= c.codebook_size) {
            return Err(Error::VocabOutOfRange {
                id: bad,
                vocab: c.codebook_size,
            });
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, step: u64, meta: serde_json::Value) -> Result<Checkpoint> {
        Ok(Checkpoint {
            kind: FLOW_KIND.into(),
            config: serde_json::to_value(&self.config)?,
            step,
            meta,
            params: self.params.to_host()?,
            optimizer: Default::default(),
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(FLOW_KIND)?;
        let config: FlowConfig = serde_json::from_value(ckpt.config.clone())?;
        let net = Self::new(config)?;
        net.params.load_host(&ckpt.params)?;
        Ok(net)
    }
}

impl VectorField for FlowNet {
    fn field(&self, z: &Tensor, t: f64, cond: &FlowCondition) -> Result<Tensor> {
        self.check(z, cond)?;
        let c = &self.config;
        let dev = device();
        let (mean, std) = (c.data_mean, c.data_std);
        let a = 1.0 - (1.0 - c.sigma_min) * t;
        let s_t = (a * a + t * t * std * std).sqrt();
        let z_n = ((z - t * mean)? / s_t)?;
        let guide: Vec<f64> = cond.guide.data.iter().map(|v| (v - mean) / std).collect();
        let guide = Tensor::from_vec(guide, (cond.n_frames(), c.n_bins), &dev)?;
        let ids: Vec<u32> = cond
            .tokens
            .iter()
            .flat_map(|&t| std::iter::repeat_n(t, c.downsample))
            .collect();
        let tok = self.p("tok_emb")?.index_select(&Tensor::new(ids, &dev)?, 0)?;
        let mut x = temporal_conv(
            &Tensor::cat(&[&z_n, &guide, &tok], 1)?,
            self.p("in.w")?,
            Some(self.p("in.b")?),
            c.kernel,
        )?;

        let temb = sinusoidal(&[t], c.time_dim, 1000.0)?;
        let temb = linear(&temb, self.p("time.w1")?, Some(self.p("time.b1")?))?.gelu_erf()?;
        let temb = linear(&temb, self.p("time.w2")?, Some(self.p("time.b2")?))?;
        let spk = Tensor::from_vec(cond.speaker.vector.clone(), (1, c.speaker_dim), &dev)?;
        let spk = linear(&spk, self.p("spk.w")?, Some(self.p("spk.b")?))?;
        let emb = (temb + spk)?.gelu_erf()?;

        for l in 0..c.blocks {
            let n = |s: &str| block_name(l, s);
            let shift = linear(&emb, self.p(&n("cond.w"))?, Some(self.p(&n("cond.b"))?))?;
            let h = layer_norm(&x, self.p(&n("ln.g"))?, self.p(&n("ln.b"))?, 1e-5)?.broadcast_add(&shift)?;
            let h = temporal_conv(&h.gelu_erf()?, self.p(&n("c1.w"))?, Some(self.p(&n("c1.b"))?), c.kernel)?;
            let h = temporal_conv(&h.gelu_erf()?, self.p(&n("c2.w"))?, Some(self.p(&n("c2.b"))?), c.kernel)?;
            x = (x + h)?;
        }
        let x = layer_norm(&x, self.p("out_ln.g")?, self.p("out_ln.b")?, 1e-5)?;
        let raw = linear(&x, self.p("out.w")?, Some(self.p("out.b")?))?;
        Ok(((raw * (std * std + 1.0).sqrt())? + mean)?)
    }
}
