//! Deterministic training loop: weighted-sampled batches, binary
//! cross-entropy, Adam at a constant learning rate, no early stopping and
//! no validation split. SMOTE, when enabled, runs once before the first
//! epoch.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autodiff::{binary_cross_entropy, AdamState, Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{build_model, ForwardCtx, ModelConfig, SequenceModel};
use crate::preprocess::SequenceDataset;
use crate::resample::{batch_weights, smote, SmoteConfig, WeightedSampler};
use crate::rng::{stream, Stream};

/// Per-step forward/backward slice size; one optimizer step still covers
/// a full batch, accumulated over slices, this only bounds peak memory.
const MICRO_BATCH: usize = 256;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub use_smote: bool,
    pub smote: SmoteConfig,
    pub use_weighted_sampling: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 1024,
            lr: 0.001,
            seed: 0,
            use_smote: true,
            smote: SmoteConfig::default(),
            use_weighted_sampling: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

/// One epoch's record in the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Sample-weighted mean loss over the epoch's batches.
    pub mean_loss: f64,
    pub seconds: f64,
    pub samples: usize,
    /// `(batch size, mean loss)` per batch, in order.
    pub batch_losses: Vec<(usize, f64)>,
}

/// Full training log: one entry per epoch.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// CSV emission (`epoch,loss,seconds`). Loss values are reproducible
    /// for a fixed seed; seconds are informational wall time.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,seconds\n");
        for e in &self.epochs {
            out.push_str(&format!("{},{},{:.3}\n", e.epoch, e.mean_loss, e.seconds));
        }
        out
    }
}

/// Train a freshly initialized model on the dataset.
///
/// Every epoch draws `n_samples` indices (weighted with replacement when
/// weighted sampling is on, a seeded shuffle otherwise) and keeps the
/// final incomplete batch. Exactly `cfg.epochs` epochs run; the
/// final-epoch weights are returned.
pub fn train(
    model_cfg: &ModelConfig,
    ds_train: &SequenceDataset,
    cfg: &TrainConfig,
) -> Result<(Box<dyn SequenceModel>, TrainLog)> {
    cfg.validate()?;
    let (neg, pos) = ds_train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Domain(
            "training data must contain both classes".into(),
        ));
    }

    let resampled;
    let ds = if cfg.use_smote {
        let smote_cfg = SmoteConfig {
            rng_seed: cfg.seed,
            ..cfg.smote
        };
        resampled = smote(ds_train, &smote_cfg)?;
        &resampled
    } else {
        ds_train
    };

    let mut model = build_model(model_cfg, ds.window, ds.n_features, cfg.seed)?;
    let mut adam = AdamState::new(cfg.lr, model.params());
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout);

    let mut sampler = if cfg.use_weighted_sampling {
        let weights = batch_weights(&ds.y)?;
        Some(WeightedSampler::new(&weights, stream(cfg.seed, Stream::Sampler))?)
    } else {
        None
    };
    let mut shuffle_rng = stream(cfg.seed, Stream::Shuffle);

    let n = ds.n_samples();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let batches: Vec<Vec<usize>> = match sampler.as_mut() {
            Some(s) => s.sample_batches(n, cfg.batch_size),
            None => {
                use rand::seq::SliceRandom;
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut shuffle_rng);
                order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect()
            }
        };

        let mut batch_losses = Vec::with_capacity(batches.len());
        for (batch_no, batch) in batches.iter().enumerate() {
            let loss = train_step(model.as_mut(), ds, batch, &mut adam, &mut dropout_rng)
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!(
                        "epoch {epoch} batch {batch_no}: {msg}"
                    )),
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at epoch {epoch} batch {batch_no}"
                )));
            }
            batch_losses.push((batch.len(), loss));
        }
        let total: usize = batch_losses.iter().map(|(s, _)| s).sum();
        let mean_loss = batch_losses
            .iter()
            .map(|&(s, l)| l * s as f64)
            .sum::<f64>()
            / total as f64;
        log.epochs.push(EpochLog {
            epoch,
            mean_loss,
            seconds: started.elapsed().as_secs_f64(),
            samples: total,
            batch_losses,
        });
    }
    Ok((model, log))
}

/// One optimizer step over one batch: forward/backward per micro-slice,
/// gradients averaged by slice weight, a single Adam update.
fn train_step(
    model: &mut dyn SequenceModel,
    ds: &SequenceDataset,
    batch: &[usize],
    adam: &mut AdamState,
    dropout_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    let n_params = model.params().len();
    let mut grads: Vec<Option<Vec<f64>>> = vec![None; n_params];
    let mut loss_acc = 0.0;
    for slice in batch.chunks(MICRO_BATCH) {
        let weight = slice.len() as f64 / batch.len() as f64;
        let (x, y) = gather_batch(ds, slice);
        let tape = Tape::new();
        let mut ctx = ForwardCtx::train(&tape, dropout_rng.clone());
        let probs = model.forward(&mut ctx, &x)?;
        // Advance the dropout stream past what this pass consumed.
        *dropout_rng = ctx.dropout_rng.clone();
        let loss = binary_cross_entropy(&probs, &y)?;
        loss_acc += loss.item()? * weight;
        let mut slice_grads = tape.backward(&loss)?;
        for (param_idx, leaf) in ctx.bound() {
            if let Some(g) = slice_grads.take(leaf) {
                let slot = grads[*param_idx].get_or_insert_with(|| vec![0.0; g.len()]);
                for (acc, gv) in slot.iter_mut().zip(&g) {
                    *acc += gv * weight;
                }
            }
        }
    }
    adam.step(model.params_mut(), &grads)?;
    Ok(loss_acc)
}

fn gather_batch(ds: &SequenceDataset, indices: &[usize]) -> (Tensor, Tensor) {
    let sample_len = ds.sample_len();
    let mut x = Vec::with_capacity(indices.len() * sample_len);
    let mut y = Vec::with_capacity(indices.len());
    for &i in indices {
        x.extend_from_slice(ds.sample(i));
        y.push(f64::from(ds.y[i]));
    }
    (
        Tensor::from_vec(vec![indices.len(), ds.window, ds.n_features], x)
            .expect("batch shape"),
        Tensor::from_vec(vec![indices.len()], y).expect("label shape"),
    )
}

/// Probabilities for every sample, dropout disabled, order preserved.
pub fn predict_proba(model: &dyn SequenceModel, ds: &SequenceDataset) -> Result<Vec<f64>> {
    if ds.n_features != model.n_features() || ds.window != model.window() {
        return Err(Error::Contract(format!(
            "dataset is {} x {} features but the model wants {} x {}",
            ds.window,
            ds.n_features,
            model.window(),
            model.n_features()
        )));
    }
    let mut out = Vec::with_capacity(ds.n_samples());
    let all: Vec<usize> = (0..ds.n_samples()).collect();
    for slice in all.chunks(MICRO_BATCH) {
        let (x, _) = gather_batch(ds, slice);
        let mut ctx = ForwardCtx::eval();
        let probs = model.forward(&mut ctx, &x)?;
        if probs.values().iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite probability emitted".into()));
        }
        out.extend_from_slice(probs.values());
    }
    Ok(out)
}
