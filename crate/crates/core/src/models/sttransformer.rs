//! Joint space-time transformer.
//!
//! With per-cell inputs each variable is a spatial unit, so the token set
//! is the (timestep, variable) grid: token (t, f) embeds the scalar
//! x[t, f] through variable f's embedding row (Z0 = X We in the
//! one-hot-expanded view). Attention logits over token pairs receive two
//! learned additive biases: a spatial F×F bias tiled over time pairs and
//! a temporal T×T bias tiled over variable pairs. Classification reads
//! the mean-pooled token representation.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{dropout, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::models::attention::{multi_head_attention, AttnParams};
use crate::models::{
    check_input, Architecture, ForwardCtx, ModelConfig, SequenceModel, StTransformerConfig,
};

struct Layer {
    attn: AttnParams,
    a_spatial: usize,
    a_temporal: usize,
}

pub struct StTransformer {
    cfg: StTransformerConfig,
    window: usize,
    n_features: usize,
    store: ParamStore,
    embed_w: usize,
    layers: Vec<Layer>,
    head_w: usize,
    head_b: usize,
    /// Constant (tokens, features) scatter pattern placing x[t, f] into
    /// variable f's input slot.
    onehot: Vec<f64>,
}

impl StTransformer {
    pub fn new(
        cfg: &StTransformerConfig,
        window: usize,
        n_features: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let d = cfg.model_dim;
        if cfg.heads == 0 || d % cfg.heads != 0 {
            return Err(Error::Config(format!(
                "head count {} does not divide model width {d}",
                cfg.heads
            )));
        }
        if cfg.layers == 0 {
            return Err(Error::Config("sttransformer needs at least one layer".into()));
        }
        let mut store = ParamStore::new();
        let embed_w = store.uniform_fan_in("embed.w", vec![n_features, d], n_features, rng);
        let layers = (0..cfg.layers)
            .map(|l| Layer {
                attn: AttnParams::register(&mut store, &format!("layer{l}"), d, rng),
                // Additive logit biases start neutral.
                a_spatial: store.zeros(&format!("layer{l}.a_spatial"), vec![n_features, n_features]),
                a_temporal: store.zeros(&format!("layer{l}.a_temporal"), vec![window, window]),
            })
            .collect();
        let head_w = store.uniform_fan_in("head.w", vec![d, 1], d, rng);
        let head_b = store.zeros("head.b", vec![1]);

        let n = window * n_features;
        let mut onehot = vec![0.0; n * n_features];
        for t in 0..window {
            for f in 0..n_features {
                onehot[(t * n_features + f) * n_features + f] = 1.0;
            }
        }
        Ok(StTransformer {
            cfg: *cfg,
            window,
            n_features,
            store,
            embed_w,
            layers,
            head_w,
            head_b,
            onehot,
        })
    }
}

impl SequenceModel for StTransformer {
    fn architecture(&self) -> Architecture {
        Architecture::StTransformer
    }

    fn config(&self) -> ModelConfig {
        ModelConfig::StTransformer(self.cfg)
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
        let n = t * f;

        // Token (t, f) carries x[t, f] in variable f's slot; the input
        // projection then gives each variable its own embedding direction.
        let scatter = Tensor::from_vec(vec![n, f], self.onehot.clone())?;
        let tokens = x.reshape(vec![b, n, 1])?.mul(&scatter)?;
        let embed_w = ctx.param(&self.store, self.embed_w)?;
        let mut z = tokens.matmul(&embed_w)?; // (B, N, d)

        for layer in &self.layers {
            // Combined additive bias over token pairs:
            // bias[(t1,f1),(t2,f2)] = A_temporal[t1,t2] + A_spatial[f1,f2].
            let a_sp = ctx.param(&self.store, layer.a_spatial)?;
            let a_tmp = ctx.param(&self.store, layer.a_temporal)?;
            let bias = a_tmp
                .reshape(vec![t, 1, t, 1])?
                .add(&a_sp.reshape(vec![1, f, 1, f])?)?
                .reshape(vec![n, n])?;
            let attn = multi_head_attention(ctx, &self.store, &layer.attn, &z, self.cfg.heads, Some(&bias))?;
            let attn = dropout(&attn, self.cfg.dropout, ctx.training, &mut ctx.dropout_rng)?;
            z = z.add(&attn)?;
        }

        let pooled = z.mean_pool(1)?; // (B, d)
        let w = ctx.param(&self.store, self.head_w)?;
        let bias = ctx.param(&self.store, self.head_b)?;
        pooled.matmul(&w)?.add(&bias)?.sigmoid()?.reshape(vec![b])
    }
}
