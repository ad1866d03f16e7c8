//! Class-imbalance handling: SMOTE at the dataset level, weighted random
//! sampling at the batch level.
//!
//! SMOTE interpolates a minority sample toward one of its k nearest
//! minority neighbors in flattened (window × features) space:
//! `x_new = x + u * (x_nn - x)` with `u ~ U(0,1)`. Sequences are
//! flattened for the neighbor search and reshaped back afterwards.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::preprocess::{SampleMeta, SequenceDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Minority/majority ratio after resampling, in (0, 1].
    pub target_ratio: f64,
    pub rng_seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target_ratio: 1.0,
            rng_seed: 0,
        }
    }
}

impl SmoteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 1 {
            return Err(Error::Config("k_neighbors must be >= 1".into()));
        }
        if !(self.target_ratio > 0.0 && self.target_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "target_ratio {} must lie in (0, 1]",
                self.target_ratio
            )));
        }
        Ok(())
    }
}

/// Number of synthetic samples needed to reach the target ratio.
pub fn synthetic_count(majority: usize, minority: usize, target_ratio: f64) -> usize {
    ((target_ratio * majority as f64).ceil() as usize).saturating_sub(minority)
}

/// Indices of the k nearest minority neighbors of `idx` (excluding
/// itself), ties broken toward the lower sample index.
fn k_nearest(flat: &[Vec<f64>], idx: usize, k: usize) -> Vec<usize> {
    let me = &flat[idx];
    let mut dists: Vec<(f64, usize)> = flat
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != idx)
        .map(|(j, other)| {
            let d2: f64 = me
                .iter()
                .zip(other)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, j)
        })
        .collect();
    dists.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distances").then(a.1.cmp(&b.1)));
    dists.truncate(k);
    dists.into_iter().map(|(_, j)| j).collect()
}

/// The k-nearest-neighbor sets SMOTE interpolates along, as dataset
/// indices: one `(minority_index, neighbor_indices)` entry per minority
/// sample. Exposed so tests can verify neighbor membership against an
/// independent oracle.
pub fn minority_neighbor_sets(
    ds: &SequenceDataset,
    cfg: &SmoteConfig,
) -> Result<Vec<(usize, Vec<usize>)>> {
    cfg.validate()?;
    let (neg, pos) = ds.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Resample("SMOTE needs both classes present".into()));
    }
    let minority_label = if pos <= neg { 1u8 } else { 0u8 };
    let minority_idx: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| ds.y[i] == minority_label)
        .collect();
    let flat: Vec<Vec<f64>> = minority_idx.iter().map(|&i| ds.sample(i).to_vec()).collect();
    Ok((0..flat.len())
        .map(|i| {
            let nn = k_nearest(&flat, i, cfg.k_neighbors)
                .into_iter()
                .map(|j| minority_idx[j])
                .collect();
            (minority_idx[i], nn)
        })
        .collect())
}

/// SMOTE oversampling of the minority class.
///
/// Original samples are preserved unchanged and come first; synthetic
/// samples (flagged in their meta) follow. Already balanced input is a
/// no-op clone. Applies to the training split only — run it after
/// splitting and scaling.
pub fn smote(ds: &SequenceDataset, cfg: &SmoteConfig) -> Result<SequenceDataset> {
    cfg.validate()?;
    let (neg, pos) = ds.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::Resample(
            "SMOTE needs both classes present".into(),
        ));
    }
    let (minority_label, minority, majority) = if pos <= neg {
        (1u8, pos, neg)
    } else {
        (0u8, neg, pos)
    };
    let need = synthetic_count(majority, minority, cfg.target_ratio);
    if need == 0 {
        return Ok(ds.clone());
    }
    if minority <= cfg.k_neighbors {
        return Err(Error::Resample(format!(
            "minority class has {minority} samples, need more than k_neighbors = {}",
            cfg.k_neighbors
        )));
    }

    // Flatten minority sequences: window and features concatenate into one
    // vector per sample.
    let minority_idx: Vec<usize> = (0..ds.n_samples())
        .filter(|&i| ds.y[i] == minority_label)
        .collect();
    let flat: Vec<Vec<f64>> = minority_idx.iter().map(|&i| ds.sample(i).to_vec()).collect();
    let neighbors: Vec<Vec<usize>> = (0..flat.len())
        .map(|i| k_nearest(&flat, i, cfg.k_neighbors))
        .collect();

    let mut rng = crate::rng::stream(cfg.rng_seed, crate::rng::Stream::Smote);
    let mut out = ds.clone();
    out.x.reserve(need * ds.sample_len());
    out.y.reserve(need);
    out.meta.reserve(need);
    for _ in 0..need {
        let base = rng.gen_range(0..flat.len());
        let nn = neighbors[base][rng.gen_range(0..neighbors[base].len())];
        let mu: f64 = rng.gen();
        let (bx, nx) = (&flat[base], &flat[nn]);
        out.x.extend(bx.iter().zip(nx).map(|(a, b)| a + mu * (b - a)));
        out.y.push(minority_label);
        let template = ds.meta[minority_idx[base]];
        out.meta.push(SampleMeta {
            synthetic: true,
            ..template
        });
    }
    Ok(out)
}

/// Per-sample weights `1 / count(class of i)`.
pub fn batch_weights(y: &[u8]) -> Result<Vec<f64>> {
    let pos = y.iter().filter(|&&v| v == 1).count();
    let neg = y.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Resample(
            "weighted sampling needs both classes present".into(),
        ));
    }
    Ok(y.iter()
        .map(|&v| if v == 1 { 1.0 / pos as f64 } else { 1.0 / neg as f64 })
        .collect())
}

/// Weighted sampling with replacement over sample indices.
///
/// With weights from [`batch_weights`] the expected class mix of every
/// batch is 1:1 regardless of the input imbalance.
pub struct WeightedSampler {
    cumulative: Vec<f64>,
    total: f64,
    rng: ChaCha8Rng,
}

impl WeightedSampler {
    pub fn new(weights: &[f64], rng: ChaCha8Rng) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Resample("no weights given".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::Resample("weights must be finite and >= 0".into()));
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            acc += w;
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::Resample("weights sum to zero".into()));
        }
        Ok(WeightedSampler {
            cumulative,
            total: acc,
            rng,
        })
    }

    pub fn draw(&mut self) -> usize {
        let u: f64 = self.rng.gen::<f64>() * self.total;
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&u).expect("finite cumulative weights"))
        {
            Ok(i) | Err(i) => i.min(self.cumulative.len() - 1),
        }
    }

    /// Draw `n` indices and split them into batches of `batch_size`
    /// (the final batch may be smaller).
    pub fn sample_batches(&mut self, n: usize, batch_size: usize) -> Vec<Vec<usize>> {
        let indices: Vec<usize> = (0..n).map(|_| self.draw()).collect();
        indices.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
    }
}
