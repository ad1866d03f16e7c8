//! Temporal convolutional classifier: stacked causal dilated
//! convolutions with exponentially increasing dilation, classifying from
//! the last temporal output. With the default kernel 3 and dilations
//! 1, 2, 4 the receptive field is 15 days, so the last output sees the
//! whole 7-day window.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{causal_dilated_conv1d, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::models::{check_input, Architecture, ForwardCtx, ModelConfig, SequenceModel, TcnConfig};

pub struct Tcn {
    cfg: TcnConfig,
    window: usize,
    n_features: usize,
    store: ParamStore,
    layers: Vec<(usize, usize)>, // (kernel, bias) parameter indices
    head_w: usize,
    head_b: usize,
}

impl Tcn {
    pub fn new(
        cfg: &TcnConfig,
        window: usize,
        n_features: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if cfg.kernel_size == 0 || cfg.channels == 0 || cfg.dilations.is_empty() {
            return Err(Error::Config(
                "tcn needs a kernel, channels, and at least one dilation".into(),
            ));
        }
        if cfg.dilations.iter().any(|&d| d == 0) {
            return Err(Error::Config("tcn dilations must be >= 1".into()));
        }
        let mut store = ParamStore::new();
        let mut layers = Vec::with_capacity(cfg.dilations.len());
        let mut c_in = n_features;
        for (l, _) in cfg.dilations.iter().enumerate() {
            let fan_in = cfg.kernel_size * c_in;
            let kernel = store.uniform_fan_in(
                &format!("l{l}.kernel"),
                vec![cfg.kernel_size, c_in, cfg.channels],
                fan_in,
                rng,
            );
            let bias = store.zeros(&format!("l{l}.bias"), vec![cfg.channels]);
            layers.push((kernel, bias));
            c_in = cfg.channels;
        }
        let head_w = store.uniform_fan_in("head.w", vec![cfg.channels, 1], cfg.channels, rng);
        let head_b = store.zeros("head.b", vec![1]);
        Ok(Tcn {
            cfg: cfg.clone(),
            window,
            n_features,
            store,
            layers,
            head_w,
            head_b,
        })
    }
}

impl SequenceModel for Tcn {
    fn architecture(&self) -> Architecture {
        Architecture::Tcn
    }

    fn config(&self) -> ModelConfig {
        ModelConfig::Tcn(self.cfg.clone())
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
        let (b, t, _) = check_input(self, x)?;
        let mut h = x.clone();
        for ((kernel, bias), &dilation) in self.layers.iter().zip(&self.cfg.dilations) {
            let k = ctx.param(&self.store, *kernel)?;
            let bias = ctx.param(&self.store, *bias)?;
            h = causal_dilated_conv1d(&h, &k, dilation)?.add(&bias)?.relu()?;
        }
        let last = h.narrow(1, t - 1, 1)?.reshape(vec![b, self.cfg.channels])?;
        let w = ctx.param(&self.store, self.head_w)?;
        let bias = ctx.param(&self.store, self.head_b)?;
        last.matmul(&w)?.add(&bias)?.sigmoid()?.reshape(vec![b])
    }
}
