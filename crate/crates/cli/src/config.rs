//! Run configuration: one TOML file drives the whole benchmark. Every
//! field has a default matching the reference hyperparameters, so an
//! empty file (or empty sections) reproduces the standard setup. The
//! grammar is documented in `docs/formats.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hypobench_core::dataio::SynthConfig;
use hypobench_core::models::{
    Architecture, BiLstmConfig, MedformerConfig, ModelConfig, StTransformerConfig, TcnConfig,
};
use hypobench_core::preprocess::{BinarizeRule, DateRange};
use hypobench_core::resample::SmoteConfig;
use hypobench_core::training::TrainConfig;
use hypobench_core::{Error, Result};

/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "HYPOBENCH_OUTPUT_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub split: SplitSection,
    pub preprocess: PreprocessSection,
    pub resample: ResampleSection,
    pub train: TrainSection,
    pub models: ModelsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            output_dir: PathBuf::from("runs/out"),
            data: DataSection::default(),
            split: SplitSection::default(),
            preprocess: PreprocessSection::default(),
            resample: ResampleSection::default(),
            train: TrainSection::default(),
            models: ModelsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
    /// Hindcast CSV path for `source = "file"`; relative paths resolve
    /// against the output directory for synthetic data.
    pub path: Option<PathBuf>,
    pub synthetic: SynthSection,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Synthetic,
            path: None,
            synthetic: SynthSection::default(),
        }
    }
}

/// Mirrors [`SynthConfig`] minus the seed, which comes from the run seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_cells: usize,
    pub n_days: usize,
    pub seasons: Vec<hypobench_core::dataio::Season>,
    pub hypoxia_base_rate: f64,
    pub noise_scale: f64,
    pub driver_scale: f64,
    pub land_fraction: f64,
    pub depth_bin_count: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthSection {
            n_cells: d.n_cells,
            n_days: d.n_days,
            seasons: d.seasons,
            hypoxia_base_rate: d.hypoxia_base_rate,
            noise_scale: d.noise_scale,
            driver_scale: d.driver_scale,
            land_fraction: d.land_fraction,
            depth_bin_count: d.depth_bin_count,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_periods: Vec<DateRange>,
}

impl Default for SplitSection {
    fn default() -> Self {
        // Hold out the final synthetic season.
        SplitSection {
            test_periods: vec![DateRange {
                start: chrono::NaiveDate::from_ymd_opt(2012, 6, 1).unwrap(),
                end: chrono::NaiveDate::from_ymd_opt(2012, 6, 30).unwrap(),
            }],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub threshold: f64,
    pub inclusive_threshold: bool,
    pub window: usize,
    pub lead: usize,
    pub encode_hour: bool,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            threshold: hypobench_core::preprocess::DEFAULT_THRESHOLD,
            inclusive_threshold: false,
            window: hypobench_core::preprocess::DEFAULT_WINDOW,
            lead: hypobench_core::preprocess::DEFAULT_LEAD,
            encode_hour: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSection {
    pub use_smote: bool,
    pub k_neighbors: usize,
    pub target_ratio: f64,
}

impl Default for ResampleSection {
    fn default() -> Self {
        let d = SmoteConfig::default();
        ResampleSection {
            use_smote: true,
            k_neighbors: d.k_neighbors,
            target_ratio: d.target_ratio,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub use_weighted_sampling: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            use_weighted_sampling: d.use_weighted_sampling,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub enabled: Vec<Architecture>,
    pub bilstm: BiLstmConfig,
    pub tcn: TcnConfig,
    pub medformer: MedformerConfig,
    pub sttransformer: StTransformerConfig,
}

impl Default for ModelsSection {
    fn default() -> Self {
        ModelsSection {
            enabled: Architecture::ALL.to_vec(),
            bilstm: BiLstmConfig::default(),
            tcn: TcnConfig::default(),
            medformer: MedformerConfig::default(),
            sttransformer: StTransformerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("malformed config {}: {e}", path.display())))?;
        if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.enabled.is_empty() {
            return Err(Error::Config("no models enabled".into()));
        }
        if self.split.test_periods.is_empty() {
            return Err(Error::Config("at least one test period is required".into()));
        }
        if self.preprocess.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if self.data.source == DataSource::File && self.data.path.is_none() {
            return Err(Error::Config("data.source = \"file\" needs data.path".into()));
        }
        self.synth_config().validate().ok(); // full check only for synthetic runs
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.data.synthetic;
        SynthConfig {
            n_cells: s.n_cells,
            n_days: s.n_days,
            seasons: s.seasons.clone(),
            hypoxia_base_rate: s.hypoxia_base_rate,
            rng_seed: self.seed,
            noise_scale: s.noise_scale,
            driver_scale: s.driver_scale,
            land_fraction: s.land_fraction,
            depth_bin_count: s.depth_bin_count,
        }
    }

    pub fn binarize_rule(&self) -> BinarizeRule {
        BinarizeRule {
            threshold: self.preprocess.threshold,
            inclusive: self.preprocess.inclusive_threshold,
        }
    }

    pub fn smote_config(&self) -> SmoteConfig {
        SmoteConfig {
            k_neighbors: self.resample.k_neighbors,
            target_ratio: self.resample.target_ratio,
            rng_seed: self.seed,
        }
    }

    /// Training config for the loop; SMOTE is applied during `prepare`,
    /// so the loop itself never re-applies it.
    pub fn train_config(&self, seed_override: Option<u64>) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            seed: seed_override.unwrap_or(self.seed),
            use_smote: false,
            smote: self.smote_config(),
            use_weighted_sampling: self.train.use_weighted_sampling,
        }
    }

    pub fn model_config(&self, arch: Architecture) -> ModelConfig {
        match arch {
            Architecture::BiLstm => ModelConfig::BiLstm(self.models.bilstm),
            Architecture::Tcn => ModelConfig::Tcn(self.models.tcn.clone()),
            Architecture::Medformer => ModelConfig::Medformer(self.models.medformer.clone()),
            Architecture::StTransformer => ModelConfig::StTransformer(self.models.sttransformer),
        }
    }

    /// Canonical serialization used for the manifest hash. The output
    /// directory is normalized out: it locates artifacts but is not part
    /// of the experiment's identity.
    pub fn canonical_toml(&self) -> Result<String> {
        let mut normalized = self.clone();
        normalized.output_dir = PathBuf::from(".");
        toml::to_string_pretty(&normalized)
            .map_err(|e| Error::Config(format!("config serialization: {e}")))
    }
}
