//! Shared multi-head attention block:
//! `softmax(Q K^T / sqrt(d_k) + bias) V` with an optional additive logit
//! bias (mask sentinel or learned positional biases).

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::models::ForwardCtx;

/// Parameter indices of one attention layer.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnParams {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    bq: usize,
    bk: usize,
    bv: usize,
    bo: usize,
}

impl AttnParams {
    pub fn register(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mat = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str| {
            store.uniform_fan_in(&format!("{prefix}.{name}"), vec![dim, dim], dim, rng)
        };
        let vec = |store: &mut ParamStore, name: &str| {
            store.zeros(&format!("{prefix}.{name}"), vec![dim])
        };
        AttnParams {
            wq: mat(store, rng, "wq"),
            wk: mat(store, rng, "wk"),
            wv: mat(store, rng, "wv"),
            wo: mat(store, rng, "wo"),
            bq: vec(store, "bq"),
            bk: vec(store, "bk"),
            bv: vec(store, "bv"),
            bo: vec(store, "bo"),
        }
    }

}

/// Multi-head attention over `z` of shape `(batch, tokens, dim)`.
///
/// `logit_bias`, when given, must broadcast to `(batch, heads, tokens,
/// tokens)`; it is added to the scaled logits before the softmax.
pub(crate) fn multi_head_attention(
    ctx: &mut ForwardCtx,
    store: &ParamStore,
    p: &AttnParams,
    z: &Tensor,
    heads: usize,
    logit_bias: Option<&Tensor>,
) -> Result<Tensor> {
    let shape = z.shape();
    let (b, n, d) = (shape[0], shape[1], shape[2]);
    if d % heads != 0 {
        return Err(Error::Config(format!(
            "head count {heads} does not divide model width {d}"
        )));
    }
    let hd = d / heads;

    let project = |ctx: &mut ForwardCtx, w: usize, bias: usize| -> Result<Tensor> {
        let w = ctx.param(store, w)?;
        let bias = ctx.param(store, bias)?;
        z.matmul(&w)?.add(&bias)
    };
    let split = |t: &Tensor| -> Result<Tensor> {
        t.reshape(vec![b, n, heads, hd])?.permute(&[0, 2, 1, 3])
    };

    let q = split(&project(ctx, p.wq, p.bq)?)?; // (B,H,N,hd)
    let k_t = project(ctx, p.wk, p.bk)?
        .reshape(vec![b, n, heads, hd])?
        .permute(&[0, 2, 3, 1])?; // (B,H,hd,N)
    let v = split(&project(ctx, p.wv, p.bv)?)?;

    let logits = q.matmul(&k_t)?.scale(1.0 / (hd as f64).sqrt())?; // (B,H,N,N)
    let probs = match logit_bias {
        Some(bias) => logits.softmax_with_bias(bias)?,
        None => logits.softmax()?,
    };
    let mixed = probs.matmul(&v)?; // (B,H,N,hd)
    let merged = mixed.permute(&[0, 2, 1, 3])?.reshape(vec![b, n, d])?;

    let wo = ctx.param(store, p.wo)?;
    let bo = ctx.param(store, p.bo)?;
    merged.matmul(&wo)?.add(&bo)
}
