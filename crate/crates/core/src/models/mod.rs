//! The four sequence classifiers. Each maps a `(batch, window, features)`
//! sample to a hypoxia probability through the same contract, so the
//! training loop, evaluation, and comparison code treat them uniformly.

mod attention;
mod bilstm;
mod medformer;
mod sttransformer;
mod tcn;

pub use bilstm::BiLstm;
pub use medformer::Medformer;
pub use sttransformer::StTransformer;
pub use tcn::Tcn;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{params_from_container, params_to_container, Binder, ParamStore, Tape, Tensor};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Large negative additive sentinel used for attention masking.
pub const MASK_SENTINEL: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    BiLstm,
    Tcn,
    Medformer,
    StTransformer,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::BiLstm,
        Architecture::Tcn,
        Architecture::Medformer,
        Architecture::StTransformer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::BiLstm => "bilstm",
            Architecture::Tcn => "tcn",
            Architecture::Medformer => "medformer",
            Architecture::StTransformer => "sttransformer",
        }
    }

    fn code(&self) -> f64 {
        match self {
            Architecture::BiLstm => 0.0,
            Architecture::Tcn => 1.0,
            Architecture::Medformer => 2.0,
            Architecture::StTransformer => 3.0,
        }
    }

    fn from_code(code: f64) -> Result<Self> {
        match code as i64 {
            0 => Ok(Architecture::BiLstm),
            1 => Ok(Architecture::Tcn),
            2 => Ok(Architecture::Medformer),
            3 => Ok(Architecture::StTransformer),
            other => Err(Error::Schema(format!("unknown architecture code {other}"))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bilstm" => Ok(Architecture::BiLstm),
            "tcn" => Ok(Architecture::Tcn),
            "medformer" => Ok(Architecture::Medformer),
            "sttransformer" => Ok(Architecture::StTransformer),
            other => Err(Error::Config(format!(
                "unknown architecture `{other}` (expected bilstm, tcn, medformer, or sttransformer)"
            ))),
        }
    }
}

/// Two stacked bidirectional recurrent layers of 120 units with 30%
/// dropout between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiLstmConfig {
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for BiLstmConfig {
    fn default() -> Self {
        BiLstmConfig {
            layers: 2,
            hidden: 120,
            dropout: 0.30,
        }
    }
}

/// Three causal dilated convolution layers (kernel 3, dilations 1, 2, 4).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcnConfig {
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub channels: usize,
}

impl Default for TcnConfig {
    fn default() -> Self {
        TcnConfig {
            kernel_size: 3,
            dilations: vec![1, 2, 4],
            channels: 64,
        }
    }
}

impl TcnConfig {
    /// `1 + (K - 1) * sum(dilations)`: how far back the last output sees.
    pub fn receptive_field(&self) -> usize {
        1 + (self.kernel_size.saturating_sub(1)) * self.dilations.iter().sum::<usize>()
    }
}

/// Multi-scale patch transformer: per-scale patch embeddings, masked
/// intra-scale attention (4 heads, 2 layers), and a learned softmax
/// weighting over scale summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MedformerConfig {
    pub patch_lengths: Vec<usize>,
    pub heads: usize,
    pub layers: usize,
    pub model_dim: usize,
    pub dropout: f64,
    /// Mask future patches inside each scale (additive sentinel bias).
    pub causal_mask: bool,
}

impl Default for MedformerConfig {
    fn default() -> Self {
        MedformerConfig {
            patch_lengths: vec![1, 7],
            heads: 4,
            layers: 2,
            model_dim: 64,
            dropout: 0.0,
            causal_mask: true,
        }
    }
}

/// Joint space-time attention over (timestep, variable) tokens with
/// learned additive spatial and temporal logit biases (16 heads, 3
/// layers). With per-cell inputs the spatial axis is the variable axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StTransformerConfig {
    pub heads: usize,
    pub layers: usize,
    pub model_dim: usize,
    pub dropout: f64,
}

impl Default for StTransformerConfig {
    fn default() -> Self {
        StTransformerConfig {
            heads: 16,
            layers: 3,
            model_dim: 64,
            dropout: 0.0,
        }
    }
}

/// Architecture selector with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelConfig {
    BiLstm(BiLstmConfig),
    Tcn(TcnConfig),
    Medformer(MedformerConfig),
    StTransformer(StTransformerConfig),
}

impl ModelConfig {
    pub fn default_for(arch: Architecture) -> Self {
        match arch {
            Architecture::BiLstm => ModelConfig::BiLstm(BiLstmConfig::default()),
            Architecture::Tcn => ModelConfig::Tcn(TcnConfig::default()),
            Architecture::Medformer => ModelConfig::Medformer(MedformerConfig::default()),
            Architecture::StTransformer => {
                ModelConfig::StTransformer(StTransformerConfig::default())
            }
        }
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            ModelConfig::BiLstm(_) => Architecture::BiLstm,
            ModelConfig::Tcn(_) => Architecture::Tcn,
            ModelConfig::Medformer(_) => Architecture::Medformer,
            ModelConfig::StTransformer(_) => Architecture::StTransformer,
        }
    }

    /// Flat numeric encoding for the checkpoint container.
    fn encode(&self) -> Vec<f64> {
        match self {
            ModelConfig::BiLstm(c) => vec![c.layers as f64, c.hidden as f64, c.dropout],
            ModelConfig::Tcn(c) => {
                let mut v = vec![c.kernel_size as f64, c.channels as f64];
                v.extend(c.dilations.iter().map(|&d| d as f64));
                v
            }
            ModelConfig::Medformer(c) => {
                let mut v = vec![
                    c.heads as f64,
                    c.layers as f64,
                    c.model_dim as f64,
                    c.dropout,
                    f64::from(u8::from(c.causal_mask)),
                ];
                v.extend(c.patch_lengths.iter().map(|&l| l as f64));
                v
            }
            ModelConfig::StTransformer(c) => {
                vec![c.heads as f64, c.layers as f64, c.model_dim as f64, c.dropout]
            }
        }
    }

    fn decode(arch: Architecture, v: &[f64]) -> Result<Self> {
        let bad = || Error::Schema(format!("malformed {arch} config vector {v:?}"));
        match arch {
            Architecture::BiLstm => {
                let [layers, hidden, dropout] = v else { return Err(bad()) };
                Ok(ModelConfig::BiLstm(BiLstmConfig {
                    layers: *layers as usize,
                    hidden: *hidden as usize,
                    dropout: *dropout,
                }))
            }
            Architecture::Tcn => {
                if v.len() < 3 {
                    return Err(bad());
                }
                Ok(ModelConfig::Tcn(TcnConfig {
                    kernel_size: v[0] as usize,
                    channels: v[1] as usize,
                    dilations: v[2..].iter().map(|&d| d as usize).collect(),
                }))
            }
            Architecture::Medformer => {
                if v.len() < 6 {
                    return Err(bad());
                }
                Ok(ModelConfig::Medformer(MedformerConfig {
                    heads: v[0] as usize,
                    layers: v[1] as usize,
                    model_dim: v[2] as usize,
                    dropout: v[3],
                    causal_mask: v[4] != 0.0,
                    patch_lengths: v[5..].iter().map(|&l| l as usize).collect(),
                }))
            }
            Architecture::StTransformer => {
                let [heads, layers, model_dim, dropout] = v else { return Err(bad()) };
                Ok(ModelConfig::StTransformer(StTransformerConfig {
                    heads: *heads as usize,
                    layers: *layers as usize,
                    model_dim: *model_dim as usize,
                    dropout: *dropout,
                }))
            }
        }
    }
}

/// Per-pass state: the parameter binder plus dropout mode and stream.
pub struct ForwardCtx<'a> {
    binder: Binder<'a>,
    pub training: bool,
    pub dropout_rng: ChaCha8Rng,
}

impl<'a> ForwardCtx<'a> {
    /// Gradient-tracked pass for one training step.
    pub fn train(tape: &'a Tape, dropout_rng: ChaCha8Rng) -> Self {
        ForwardCtx {
            binder: Binder::new(Some(tape)),
            training: true,
            dropout_rng,
        }
    }

    /// Untracked inference pass; dropout is identity.
    pub fn eval() -> Self {
        ForwardCtx {
            binder: Binder::new(None),
            training: false,
            dropout_rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn param(&mut self, store: &ParamStore, idx: usize) -> Result<Tensor> {
        self.binder.bind(store, idx)
    }

    /// `(param index, bound leaf)` pairs from this pass.
    pub fn bound(&self) -> &[(usize, Tensor)] {
        self.binder.bound()
    }
}

/// Common contract of the four classifiers: `(batch, window, features)`
/// in, `(batch,)` probabilities out.
pub trait SequenceModel: Send {
    fn architecture(&self) -> Architecture;
    fn config(&self) -> ModelConfig;
    fn window(&self) -> usize;
    fn n_features(&self) -> usize;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn forward(&self, ctx: &mut ForwardCtx, x: &Tensor) -> Result<Tensor>;

    fn param_count(&self) -> usize {
        self.params().scalar_count()
    }
}

pub(crate) fn check_input(
    model: &dyn SequenceModel,
    x: &Tensor,
) -> Result<(usize, usize, usize)> {
    let shape = x.shape();
    if shape.len() != 3 {
        return Err(Error::shape(
            "forward",
            format!("expected (batch, window, features), got {shape:?}"),
        ));
    }
    let (b, t, f) = (shape[0], shape[1], shape[2]);
    if t != model.window() || f != model.n_features() {
        return Err(Error::shape(
            "forward",
            format!(
                "{} was built for window {} x {} features, got {t} x {f}",
                model.architecture(),
                model.window(),
                model.n_features()
            ),
        ));
    }
    Ok((b, t, f))
}

/// Build a model with seeded initialization (uniform ±1/sqrt(fan_in)
/// matrices, zero biases except the +1 forget-gate bias).
pub fn build_model(
    cfg: &ModelConfig,
    window: usize,
    n_features: usize,
    seed: u64,
) -> Result<Box<dyn SequenceModel>> {
    if window == 0 || n_features == 0 {
        return Err(Error::Config("window and feature count must be positive".into()));
    }
    let mut rng = stream(seed, Stream::Init);
    Ok(match cfg {
        ModelConfig::BiLstm(c) => Box::new(BiLstm::new(c, window, n_features, &mut rng)?),
        ModelConfig::Tcn(c) => Box::new(Tcn::new(c, window, n_features, &mut rng)?),
        ModelConfig::Medformer(c) => Box::new(Medformer::new(c, window, n_features, &mut rng)?),
        ModelConfig::StTransformer(c) => {
            Box::new(StTransformer::new(c, window, n_features, &mut rng)?)
        }
    })
}

/// Checkpoint a model: parameters plus enough metadata to rebuild it.
pub fn save_model(model: &dyn SequenceModel, path: &Path) -> Result<()> {
    let mut c = params_to_container(model.params())?;
    c.insert_scalar("meta.version", 1.0)?;
    c.insert_scalar("meta.arch", model.architecture().code())?;
    c.insert_scalar("meta.window", model.window() as f64)?;
    c.insert_scalar("meta.n_features", model.n_features() as f64)?;
    let cfg = model.config().encode();
    let len = cfg.len();
    c.insert("meta.config", vec![len], cfg)?;
    c.save(path)
}

/// Rebuild a model from a checkpoint (bit-exact parameter restore).
pub fn load_model(path: &Path) -> Result<Box<dyn SequenceModel>> {
    let c = Container::load(path)?;
    let version = c.scalar("meta.version")?;
    if version != 1.0 {
        return Err(Error::Schema(format!("unsupported checkpoint version {version}")));
    }
    let arch = Architecture::from_code(c.scalar("meta.arch")?)?;
    let cfg = ModelConfig::decode(arch, &c.get("meta.config")?.values)?;
    let window = c.scalar("meta.window")? as usize;
    let n_features = c.scalar("meta.n_features")? as usize;
    let mut model = build_model(&cfg, window, n_features, 0)?;
    let mut params = Container::new();
    for name in c.names() {
        if !name.starts_with("meta.") {
            let e = c.get(name)?;
            params.insert(name, e.shape.clone(), e.values.clone())?;
        }
    }
    params_from_container(model.params_mut(), &params)?;
    Ok(model)
}
