//! Multi-scale patch transformer.
//!
//! The window is decomposed into temporal patches at several resolutions
//! (default lengths 1 and 7 over the 7-day window, right-padded when a
//! length does not divide the window). Each scale is embedded, carries a
//! learned positional embedding, and runs through shared masked
//! attention layers; a learned softmax over the per-scale summaries pools
//! them into one vector for the sigmoid head.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, dropout, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::models::attention::{multi_head_attention, AttnParams};
use crate::models::{
    check_input, Architecture, ForwardCtx, MedformerConfig, ModelConfig, SequenceModel,
    MASK_SENTINEL,
};

struct Scale {
    patch_len: usize,
    n_patches: usize,
    embed_w: usize,
    embed_b: usize,
    pos: usize,
}

pub struct Medformer {
    cfg: MedformerConfig,
    window: usize,
    n_features: usize,
    store: ParamStore,
    scales: Vec<Scale>,
    layers: Vec<AttnParams>,
    scale_score_w: usize,
    head_w: usize,
    head_b: usize,
}

impl Medformer {
    pub fn new(
        cfg: &MedformerConfig,
        window: usize,
        n_features: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if cfg.patch_lengths.is_empty() {
            return Err(Error::Config("medformer has no patch scales".into()));
        }
        if cfg.patch_lengths.iter().any(|&l| l == 0 || l > window) {
            return Err(Error::Config(format!(
                "patch lengths {:?} must lie in 1..={window}",
                cfg.patch_lengths
            )));
        }
        let d = cfg.model_dim;
        if cfg.heads == 0 || d % cfg.heads != 0 {
            return Err(Error::Config(format!(
                "head count {} does not divide model width {d}",
                cfg.heads
            )));
        }
        let mut store = ParamStore::new();
        let mut scales = Vec::with_capacity(cfg.patch_lengths.len());
        for (s, &patch_len) in cfg.patch_lengths.iter().enumerate() {
            let n_patches = window.div_ceil(patch_len);
            let in_dim = patch_len * n_features;
            scales.push(Scale {
                patch_len,
                n_patches,
                embed_w: store.uniform_fan_in(
                    &format!("scale{s}.embed_w"),
                    vec![in_dim, d],
                    in_dim,
                    rng,
                ),
                embed_b: store.zeros(&format!("scale{s}.embed_b"), vec![d]),
                pos: store.uniform_fan_in(&format!("scale{s}.pos"), vec![n_patches, d], d, rng),
            });
        }
        let layers = (0..cfg.layers)
            .map(|l| AttnParams::register(&mut store, &format!("layer{l}"), d, rng))
            .collect();
        let scale_score_w = store.uniform_fan_in("scale_score.w", vec![d, 1], d, rng);
        let head_w = store.uniform_fan_in("head.w", vec![d, 1], d, rng);
        let head_b = store.zeros("head.b", vec![1]);
        Ok(Medformer {
            cfg: cfg.clone(),
            window,
            n_features,
            store,
            scales,
            layers,
            scale_score_w,
            head_w,
            head_b,
        })
    }

    /// Strictly-upper-triangular sentinel mask: patch i may attend to
    /// patches <= i only.
    fn causal_mask(n: usize) -> Tensor {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                m[i * n + j] = MASK_SENTINEL;
            }
        }
        Tensor::from_vec(vec![n, n], m).expect("mask shape")
    }
}

impl SequenceModel for Medformer {
    fn architecture(&self) -> Architecture {
        Architecture::Medformer
    }

    fn config(&self) -> ModelConfig {
        ModelConfig::Medformer(self.cfg.clone())
    }

    fn window(&self) -> usize {
        self.window
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, ctx: &mut ForwardCtx, x: &Tensor) -> Result<Tensor> {
        let (b, t, f) = check_input(self, x)?;
        let d = self.cfg.model_dim;

        let mut summaries = Vec::with_capacity(self.scales.len());
        for scale in &self.scales {
            let padded_t = scale.n_patches * scale.patch_len;
            let xp = if padded_t > t {
                let pad = Tensor::zeros(vec![b, padded_t - t, f]);
                concat(&[x, &pad], 1)?
            } else {
                x.clone()
            };
            let patches = xp.reshape(vec![b, scale.n_patches, scale.patch_len * f])?;
            let embed_w = ctx.param(&self.store, scale.embed_w)?;
            let embed_b = ctx.param(&self.store, scale.embed_b)?;
            let pos = ctx.param(&self.store, scale.pos)?;
            let mut z = patches.matmul(&embed_w)?.add(&embed_b)?.add(&pos)?;

            let mask = (self.cfg.causal_mask && scale.n_patches > 1)
                .then(|| Self::causal_mask(scale.n_patches));
            for layer in &self.layers {
                let attn =
                    multi_head_attention(ctx, &self.store, layer, &z, self.cfg.heads, mask.as_ref())?;
                let attn = dropout(&attn, self.cfg.dropout, ctx.training, &mut ctx.dropout_rng)?;
                z = z.add(&attn)?;
            }
            summaries.push(z.mean_pool(1)?.reshape(vec![b, 1, d])?);
        }

        // Learned softmax weighting over scale summaries.
        let refs: Vec<&Tensor> = summaries.iter().collect();
        let stack = concat(&refs, 1)?; // (B, S, d)
        let s = self.scales.len();
        let score_w = ctx.param(&self.store, self.scale_score_w)?;
        let weights = stack
            .matmul(&score_w)?
            .reshape(vec![b, s])?
            .softmax()?
            .reshape(vec![b, s, 1])?;
        let pooled = stack.mul(&weights)?.sum_pool(1)?; // (B, d)

        let w = ctx.param(&self.store, self.head_w)?;
        let bias = ctx.param(&self.store, self.head_b)?;
        pooled.matmul(&w)?.add(&bias)?.sigmoid()?.reshape(vec![b])
    }
}
