//! Decoder-only transformer over the unified token vocabulary.

mod decode;
mod train;

use candle_core::{Tensor, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ops::{causal_softmax, fused_log_softmax};
use crate::nn::{device, layer_norm, linear, Checkpoint, ParamStore};
use crate::sequence::{LMTrainExample, VocabLayout, SPEAKER_ID};

pub use decode::{decode, DecodeOutput, DecodeStatus, DecodeStrategy};
pub use train::{lm_loss, masked_accuracy, train_lm, LmTrainConfig, LmTrainState, TrainLogRow};

pub const LM_KIND: &str = "lm";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LMConfig {
    pub layers: usize,
    pub width: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub dropout: f64,
    /// Size of the learned position table.
    pub max_len: usize,
    /// Position id given to `Ⓣ`; earlier tokens count down from it.
    pub turn_position: usize,
    pub speaker_dim: usize,
    pub layout: VocabLayout,
    pub zero_head: bool,
    pub seed: u64,
}

impl Default for LMConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            width: 128,
            heads: 4,
            ff_width: 512,
            dropout: 0.0,
            max_len: 512,
            turn_position: 256,
            speaker_dim: 80,
            layout: VocabLayout::new(16),
            zero_head: true,
            seed: 0,
        }
    }
}

impl LMConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.width == 0 || self.heads == 0 || self.width % self.heads != 0 {
            return bad(format!("width {} not divisible by heads {}", self.width, self.heads));
        }
        if self.layers == 0 || self.ff_width == 0 || self.speaker_dim == 0 {
            return bad("layers, ff_width and speaker_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.turn_position >= self.max_len {
            return bad("turn_position must be below max_len".into());
        }
        if self.layout.semantic_size == 0 {
            return bad("empty semantic vocabulary".into());
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.layout.size()
    }

    /// Position ids for a sequence of `len` tokens whose `Ⓣ` sits at `turn`.
    pub fn position_ids(&self, len: usize, turn: usize) -> Result<Vec<u32>> {
        if turn > self.turn_position {
            return Err(Error::SequenceTooLong {
                what: "prefix before the turn marker",
                len: turn + 1,
                limit: self.turn_position + 1,
            });
        }
        let offset = self.turn_position - turn;
        if offset + len > self.max_len {
            return Err(Error::SequenceTooLong {
                what: "sequence",
                len: len + offset,
                limit: self.max_len,
            });
        }
        Ok((0..len).map(|p| (offset + p) as u32).collect())
    }
}

/// One row of a forward batch.
#[derive(Debug, Clone, Copy)]
pub struct LmInput<'a> {
    pub ids: &'a [u32],
    pub turn: usize,
    pub speaker: &'a [f64],
}

impl<'a> From<&'a LMTrainExample> for LmInput<'a> {
    fn from(e: &'a LMTrainExample) -> Self {
        Self {
            ids: &e.ids,
            turn: e.turn_index(),
            speaker: &e.speaker,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EditorLm {
    pub config: LMConfig,
    pub params: ParamStore,
}

struct Block<'a> {
    ln1: (&'a Tensor, &'a Tensor),
    wq: (&'a Tensor, &'a Tensor),
    wk: (&'a Tensor, &'a Tensor),
    wv: (&'a Tensor, &'a Tensor),
    wo: (&'a Tensor, &'a Tensor),
    ln2: (&'a Tensor, &'a Tensor),
    w1: (&'a Tensor, &'a Tensor),
    w2: (&'a Tensor, &'a Tensor),
}

fn block_name(l: usize, p: &str) -> String {
    format!("blocks.{l:02}.{p}")
}

impl EditorLm {
    pub fn new(config: LMConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut p = ParamStore::new();
        let (w, f, v) = (config.width, config.ff_width, config.vocab_size());
        let std = 0.02;
        let out_std = std / (2.0 * config.layers as f64).sqrt();
        p.normal("tok_emb", &[v, w], std, &mut rng)?;
        p.normal("pos_emb", &[config.max_len, w], std, &mut rng)?;
        p.normal("spk.w", &[config.speaker_dim, w], std, &mut rng)?;
        p.constant("spk.b", &[w], 0.0)?;
        for l in 0..config.layers {
            let n = |s: &str| block_name(l, s);
            p.constant(&n("ln1.g"), &[w], 1.0)?;
            p.constant(&n("ln1.b"), &[w], 0.0)?;
            for q in ["wq", "wk", "wv"] {
                p.normal(&n(&format!("{q}.w")), &[w, w], std, &mut rng)?;
                p.constant(&n(&format!("{q}.b")), &[w], 0.0)?;
            }
            p.normal(&n("wo.w"), &[w, w], out_std, &mut rng)?;
            p.constant(&n("wo.b"), &[w], 0.0)?;
            p.constant(&n("ln2.g"), &[w], 1.0)?;
            p.constant(&n("ln2.b"), &[w], 0.0)?;
            p.normal(&n("ff1.w"), &[w, f], std, &mut rng)?;
            p.constant(&n("ff1.b"), &[f], 0.0)?;
            p.normal(&n("ff2.w"), &[f, w], out_std, &mut rng)?;
            p.constant(&n("ff2.b"), &[w], 0.0)?;
        }
        p.constant("ln_f.g", &[w], 1.0)?;
        p.constant("ln_f.b", &[w], 0.0)?;
        if config.zero_head {
            p.constant("head.w", &[w, v], 0.0)?;
        } else {
            p.normal("head.w", &[w, v], std, &mut rng)?;
        }
        p.constant("head.b", &[v], 0.0)?;
        Ok(Self { config, params: p })
    }

    fn pair(&self, a: &str, b: &str) -> Result<(&Tensor, &Tensor)> {
        Ok((self.params.get(a)?, self.params.get(b)?))
    }

    fn block(&self, l: usize) -> Result<Block<'_>> {
        let n = |s: &str| block_name(l, s);
        Ok(Block {
            ln1: self.pair(&n("ln1.g"), &n("ln1.b"))?,
            wq: self.pair(&n("wq.w"), &n("wq.b"))?,
            wk: self.pair(&n("wk.w"), &n("wk.b"))?,
            wv: self.pair(&n("wv.w"), &n("wv.b"))?,
            wo: self.pair(&n("wo.w"), &n("wo.b"))?,
            ln2: self.pair(&n("ln2.g"), &n("ln2.b"))?,
            w1: self.pair(&n("ff1.w"), &n("ff1.b"))?,
            w2: self.pair(&n("ff2.w"), &n("ff2.b"))?,
        })
    }

    /// Per-position next-token log-probabilities, shape `(B, T, V)`, with
    /// shorter rows right-padded. Position `p` predicts the token at `p + 1`.
    pub fn forward(&self, batch: &[LmInput<'_>]) -> Result<Tensor> {
        self.forward_inner(batch, None)
    }

    pub(crate) fn forward_inner(&self, batch: &[LmInput<'_>], mut rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let c = &self.config;
        if batch.is_empty() {
            return Err(Error::EmptyInput("forward batch"));
        }
        let b = batch.len();
        let t = batch.iter().map(|r| r.ids.len()).max().unwrap_or(0);
        let (w, h) = (c.width, c.heads);
        let dh = w / h;
        let mut ids = Vec::with_capacity(b * t);
        let mut pos = Vec::with_capacity(b * t);
        let mut spk = Vec::with_capacity(b * c.speaker_dim);
        for r in batch {
            if r.ids.len() < 2 || r.ids[1] != SPEAKER_ID {
                return Err(Error::ShapeMismatch("sequence must start with Ⓢ and the speaker slot".into()));
            }
            if let Some(&bad) = r.ids.iter().find(|&&i| i as usize >= c.vocab_size()) {
                return Err(Error::VocabOutOfRange {
                    id: bad,
                    vocab: c.vocab_size(),
                });
            }
            if r.speaker.len() != c.speaker_dim {
                return Err(Error::ShapeMismatch(format!(
                    "speaker vector has {} dims, model expects {}",
                    r.speaker.len(),
                    c.speaker_dim
                )));
            }
            let p = c.position_ids(t, r.turn)?;
            ids.extend_from_slice(r.ids);
            ids.extend(std::iter::repeat_n(r.ids[r.ids.len() - 1], t - r.ids.len()));
            pos.extend(p);
            spk.extend_from_slice(r.speaker);
        }
        let dev = device();
        let ids = Tensor::from_vec(ids, b * t, &dev)?;
        let pos = Tensor::from_vec(pos, b * t, &dev)?;
        let tok = self.params.get("tok_emb")?.index_select(&ids, 0)?.reshape((b, t, w))?;
        let spk = Tensor::from_vec(spk, (b, c.speaker_dim), &dev)?;
        let spk = linear(&spk, self.params.get("spk.w")?, Some(self.params.get("spk.b")?))?.reshape((b, 1, w))?;
        let tok = Tensor::cat(&[tok.narrow(1, 0, 1)?, spk, tok.narrow(1, 2, t - 2)?], 1)?;
        let mut x = (tok + self.params.get("pos_emb")?.index_select(&pos, 0)?.reshape((b, t, w))?)?;

        let scale = 1.0 / (dh as f64).sqrt();
        let mut dropout = |x: Tensor| -> Result<Tensor> {
            match rng.as_deref_mut() {
                Some(r) if c.dropout > 0.0 => dropout_mask(&x, c.dropout, r),
                _ => Ok(x),
            }
        };

        for l in 0..c.layers {
            let blk = self.block(l)?;
            let hdn = layer_norm(&x, blk.ln1.0, blk.ln1.1, 1e-5)?;
            let split = |p: (&Tensor, &Tensor)| -> Result<Tensor> {
                Ok(linear(&hdn, p.0, Some(p.1))?
                    .reshape((b, t, h, dh))?
                    .transpose(1, 2)?
                    .contiguous()?)
            };
            let (q, k, v) = (split(blk.wq)?, split(blk.wk)?, split(blk.wv)?);
            let att = causal_softmax(&(q.matmul(&k.transpose(2, 3)?.contiguous()?)? * scale)?)?;
            let y = att.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, t, w))?;
            x = (x + dropout(linear(&y, blk.wo.0, Some(blk.wo.1))?)?)?;
            let hdn = layer_norm(&x, blk.ln2.0, blk.ln2.1, 1e-5)?;
            let ff = linear(&linear(&hdn, blk.w1.0, Some(blk.w1.1))?.gelu_erf()?, blk.w2.0, Some(blk.w2.1))?;
            x = (x + dropout(ff)?)?;
        }
        let x = layer_norm(&x, self.params.get("ln_f.g")?, self.params.get("ln_f.b")?, 1e-5)?;
        let logits = linear(&x, self.params.get("head.w")?, Some(self.params.get("head.b")?))?;
        Ok(fused_log_softmax(&logits)?)
    }

    pub fn to_checkpoint(&self, step: u64, meta: serde_json::Value) -> Result<Checkpoint> {
        Ok(Checkpoint {
            kind: LM_KIND.into(),
            config: serde_json::to_value(&self.config)?,
            step,
            meta,
            params: self.params.to_host()?,
            optimizer: Default::default(),
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        ckpt.expect_kind(LM_KIND)?;
        let config: LMConfig = serde_json::from_value(ckpt.config.clone())?;
        let model = Self::new(config)?;
        model.params.load_host(&ckpt.params)?;
        Ok(model)
    }
}

/// Inverted dropout with a host-drawn Bernoulli mask.
fn dropout_mask(x: &Tensor, p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    use rand::Rng;
    let keep = 1.0 - p;
    let mask: Vec<f64> = (0..x.elem_count())
        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    Ok((x * Tensor::from_vec(mask, x.dims(), &device())?)?)
}

/// Log-probability rows as host vectors, for tests and inspection.
pub fn rows(logp: &Tensor, b: usize) -> Result<Vec<Vec<f64>>> {
    Ok(logp.get(b)?.to_vec2::<f64>()?)
}

/// Log-sum-exp per row of the last dimension.
pub fn row_lse(logp: &Tensor) -> Result<Vec<f64>> {
    Ok(logp.exp()?.sum(D::Minus1)?.log()?.flatten_all()?.to_vec1::<f64>()?)
}
