//! Bidirectional recurrent classifier.
//!
//! Each layer runs one recurrent cell forward over the window and one
//! backward, emitting the per-timestep concatenation `[fwd_t ; bwd_t]`
//! (240 wide at the default 120 units). Stacked layers are separated by
//! 30% dropout; the head reads the final state of each direction.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, dropout, ParamStore, Tensor};
use crate::error::Result;
use crate::models::{check_input, Architecture, BiLstmConfig, ForwardCtx, ModelConfig, SequenceModel};

#[derive(Debug, Clone, Copy)]
struct Direction {
    w_ih: usize,
    w_hh: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fwd: Direction,
    bwd: Direction,
}

pub struct BiLstm {
    cfg: BiLstmConfig,
    window: usize,
    n_features: usize,
    store: ParamStore,
    layers: Vec<Layer>,
    head_w: usize,
    head_b: usize,
}

impl BiLstm {
    pub fn new(
        cfg: &BiLstmConfig,
        window: usize,
        n_features: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        use crate::error::Error;
        if cfg.layers == 0 || cfg.hidden == 0 {
            return Err(Error::Config("bilstm needs at least one layer and unit".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Config(format!(
                "bilstm dropout {} must lie in [0, 1)",
                cfg.dropout
            )));
        }
        let h = cfg.hidden;
        let mut store = ParamStore::new();
        let direction = |store: &mut ParamStore,
                             rng: &mut ChaCha8Rng,
                             name: String,
                             input: usize|
         -> Direction {
            // Gate order i, f, g, o; the forget-gate quarter starts at +1.
            let mut bias = vec![0.0; 4 * h];
            bias[h..2 * h].fill(1.0);
            Direction {
                w_ih: store.uniform_fan_in(&format!("{name}.w_ih"), vec![input, 4 * h], input, rng),
                w_hh: store.uniform_fan_in(&format!("{name}.w_hh"), vec![h, 4 * h], h, rng),
                bias: store.from_values(&format!("{name}.bias"), vec![4 * h], bias),
            }
        };
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let input = if l == 0 { n_features } else { 2 * h };
            layers.push(Layer {
                fwd: direction(&mut store, rng, format!("l{l}.fwd"), input),
                bwd: direction(&mut store, rng, format!("l{l}.bwd"), input),
            });
        }
        let head_w = store.uniform_fan_in("head.w", vec![2 * h, 1], 2 * h, rng);
        let head_b = store.zeros("head.b", vec![1]);
        Ok(BiLstm {
            cfg: *cfg,
            window,
            n_features,
            store,
            layers,
            head_w,
            head_b,
        })
    }

    /// One recurrent sweep; `reverse` walks the window from the last day
    /// backwards. Returns the hidden state per time index.
    fn run_direction(
        &self,
        ctx: &mut ForwardCtx,
        seq: &Tensor,
        dir: &Direction,
        reverse: bool,
    ) -> Result<Vec<Tensor>> {
        let (b, t) = (seq.shape()[0], seq.shape()[1]);
        let input = seq.shape()[2];
        let h = self.cfg.hidden;

        let w_ih = ctx.param(&self.store, dir.w_ih)?;
        let w_hh = ctx.param(&self.store, dir.w_hh)?;
        let bias = ctx.param(&self.store, dir.bias)?;

        // Project the whole window through the input weights in one product.
        let proj = seq
            .reshape(vec![b * t, input])?
            .matmul(&w_ih)?
            .add(&bias)?
            .reshape(vec![b, t, 4 * h])?;

        let mut hidden = Tensor::zeros(vec![b, h]);
        let mut cell = Tensor::zeros(vec![b, h]);
        let mut states = vec![Tensor::zeros(vec![0]); t];
        let order: Vec<usize> = if reverse {
            (0..t).rev().collect()
        } else {
            (0..t).collect()
        };
        for ti in order {
            let z = proj
                .narrow(1, ti, 1)?
                .reshape(vec![b, 4 * h])?
                .add(&hidden.matmul(&w_hh)?)?;
            let i_gate = z.narrow(1, 0, h)?.sigmoid()?;
            let f_gate = z.narrow(1, h, h)?.sigmoid()?;
            let g_gate = z.narrow(1, 2 * h, h)?.tanh()?;
            let o_gate = z.narrow(1, 3 * h, h)?.sigmoid()?;
            cell = f_gate.mul(&cell)?.add(&i_gate.mul(&g_gate)?)?;
            hidden = o_gate.mul(&cell.tanh()?)?;
            states[ti] = hidden.clone();
        }
        Ok(states)
    }
}

impl SequenceModel for BiLstm {
    fn architecture(&self) -> Architecture {
        Architecture::BiLstm
    }

    fn config(&self) -> ModelConfig {
        ModelConfig::BiLstm(self.cfg)
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
        let h = self.cfg.hidden;

        let mut seq = x.clone();
        let mut final_fwd = None;
        let mut final_bwd = None;
        for (li, layer) in self.layers.iter().enumerate() {
            let fwd = self.run_direction(ctx, &seq, &layer.fwd, false)?;
            let bwd = self.run_direction(ctx, &seq, &layer.bwd, true)?;
            let steps: Vec<Tensor> = (0..t)
                .map(|ti| {
                    concat(&[&fwd[ti], &bwd[ti]], 1)?.reshape(vec![b, 1, 2 * h])
                })
                .collect::<Result<_>>()?;
            let step_refs: Vec<&Tensor> = steps.iter().collect();
            seq = concat(&step_refs, 1)?;
            if li + 1 < self.layers.len() {
                seq = dropout(&seq, self.cfg.dropout, ctx.training, &mut ctx.dropout_rng)?;
            }
            // Each direction's last processed state feeds the head.
            final_fwd = Some(fwd[t - 1].clone());
            final_bwd = Some(bwd[0].clone());
        }

        let head_in = concat(&[&final_fwd.unwrap(), &final_bwd.unwrap()], 1)?;
        let w = ctx.param(&self.store, self.head_w)?;
        let bias = ctx.param(&self.store, self.head_b)?;
        head_in.matmul(&w)?.add(&bias)?.sigmoid()?.reshape(vec![b])
    }
}
