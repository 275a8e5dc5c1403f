//! Fused CPU kernels with hand-written backward passes.

use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor, D};

fn contiguous_f64<'a>(storage: &'a CpuStorage, layout: &Layout) -> candle_core::Result<&'a [f64]> {
    let data = match storage {
        CpuStorage::F64(v) => v.as_slice(),
        _ => candle_core::bail!("fused kernels expect f64 storage"),
    };
    match layout.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => candle_core::bail!("fused kernels expect contiguous input"),
    }
}

/// Softmax over the last dimension of `(.., T, T)` scores where query row `i`
/// only sees keys `0..=i`; masked entries come out as exact zeros.
struct CausalSoftmax;

impl CustomOp1 for CausalSoftmax {
    fn name(&self) -> &'static str {
        "causal-softmax"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let src = contiguous_f64(storage, layout)?;
        let dims = layout.dims();
        let t = dims[dims.len() - 1];
        if dims.len() < 2 || dims[dims.len() - 2] != t {
            candle_core::bail!("causal softmax needs square trailing dims, got {dims:?}");
        }
        let mut out = vec![0.0; src.len()];
        for (r, (row, dst)) in src.chunks_exact(t).zip(out.chunks_exact_mut(t)).enumerate() {
            let i = r % t;
            let live = &row[..=i];
            let max = live.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (d, &v) in dst.iter_mut().zip(live) {
                *d = (v - max).exp();
                sum += *d;
            }
            for d in &mut dst[..=i] {
                *d /= sum;
            }
        }
        Ok((CpuStorage::F64(out), layout.shape().clone()))
    }

    fn bwd(&self, _arg: &Tensor, res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let dot = (grad * res)?.sum_keepdim(D::Minus1)?;
        Ok(Some((res * grad.broadcast_sub(&dot)?)?))
    }
}

pub fn causal_softmax(x: &Tensor) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op1(CausalSoftmax)
}

struct LogSoftmax;

impl CustomOp1 for LogSoftmax {
    fn name(&self) -> &'static str {
        "log-softmax"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let src = contiguous_f64(storage, layout)?;
        let v = layout.dims()[layout.dims().len() - 1];
        let mut out = vec![0.0; src.len()];
        for (row, dst) in src.chunks_exact(v).zip(out.chunks_exact_mut(v)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
            for (d, x) in dst.iter_mut().zip(row) {
                *d = x - lse;
            }
        }
        Ok((CpuStorage::F64(out), layout.shape().clone()))
    }

    fn bwd(&self, _arg: &Tensor, res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        let total = grad.sum_keepdim(D::Minus1)?;
        Ok(Some((grad - res.exp()?.broadcast_mul(&total)?)?))
    }
}

pub fn fused_log_softmax(x: &Tensor) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op1(LogSoftmax)
}
