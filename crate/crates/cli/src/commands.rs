//! Subcommand implementations. `bench` is exactly the subcommands run in
//! sequence (training the enabled models concurrently); every artifact is
//! a pure function of (config, seed).

use std::path::PathBuf;

use hypobench_core::container::Container;
use hypobench_core::dataio::{generate_synthetic, load_hindcast, write_hindcast_to, HindcastSet};
use hypobench_core::emit;
use hypobench_core::metrics::{optimize_threshold, pr_auc, roc_auc};
use hypobench_core::models::{load_model, save_model, Architecture, SequenceModel};
use hypobench_core::preprocess::{
    apply_scaler, build_sequences, fit_scaler, temporal_split, SequenceDataset,
};
use hypobench_core::resample::smote;
use hypobench_core::stats::pairwise_compare;
use hypobench_core::training::{predict_proba, train, TrainLog};
use hypobench_core::{Error, Result};

use crate::config::{DataSource, RunConfig};
use crate::output::{require_file, write_manifest, OutputTracker, RunDirs};

/// Model selection for `train`/`evaluate`: everything enabled, or one.
#[derive(Debug, Clone, Copy)]
pub enum ModelSelect {
    All,
    One(Architecture),
}

impl ModelSelect {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(ModelSelect::All)
        } else {
            Ok(ModelSelect::One(s.parse()?))
        }
    }

    fn resolve(&self, cfg: &RunConfig) -> Vec<Architecture> {
        match self {
            ModelSelect::All => cfg.models.enabled.clone(),
            ModelSelect::One(a) => vec![*a],
        }
    }
}

fn dirs(cfg: &RunConfig) -> RunDirs {
    RunDirs::new(&cfg.output_dir)
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn synth(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let dirs = dirs(cfg);
    let mut tracker = OutputTracker::new();
    let synth_cfg = cfg.synth_config();
    synth_cfg.validate()?;
    let set = generate_synthetic(&synth_cfg)?;
    let path = out.unwrap_or_else(|| dirs.hindcast_csv());
    let mut bytes = Vec::new();
    write_hindcast_to(&set, &mut bytes)?;
    tracker.write(&path, &bytes)?;
    write_manifest(&mut tracker, &dirs, &cfg.canonical_toml()?, cfg.seed)?;
    println!(
        "synth: {} cells x {} days -> {} ({} records, positive rate {:.4})",
        set.cells(),
        set.days(),
        path.display(),
        set.records().len(),
        set.positive_rate(cfg.preprocess.threshold)
    );
    tracker.commit();
    Ok(())
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

fn load_input_set(cfg: &RunConfig) -> Result<HindcastSet> {
    match cfg.data.source {
        DataSource::File => {
            let path = cfg.data.path.as_ref().expect("validated file source");
            load_hindcast(path)
        }
        DataSource::Synthetic => {
            let path = dirs(cfg).hindcast_csv();
            require_file(&path, "hypobench synth")?;
            load_hindcast(&path)
        }
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<()> {
    let dirs = dirs(cfg);
    let mut tracker = OutputTracker::new();
    let set = load_input_set(cfg)?;
    let (train_set, _) = temporal_split(&set, &cfg.split.test_periods)?;
    let scaler = fit_scaler(&train_set)?;
    let rule = cfg.binarize_rule();
    let window = cfg.preprocess.window;
    let lead = cfg.preprocess.lead;

    let train_norm = apply_scaler(&scaler, &train_set, cfg.preprocess.encode_hour)?;
    let (mut ds_train, stats) = build_sequences(&train_norm, window, lead, rule)?;
    if stats.short_series_skipped > 0 {
        eprintln!(
            "warning: {} contiguous series shorter than window + lead were skipped",
            stats.short_series_skipped
        );
    }
    if cfg.resample.use_smote {
        ds_train = smote(&ds_train, &cfg.smote_config())?;
    }
    write_dataset(&mut tracker, &dirs.dataset_train(), &ds_train)?;
    let (neg, pos) = ds_train.class_counts();
    println!(
        "prepare: train {} samples ({pos} positive / {neg} negative), window {window}, lead {lead}",
        ds_train.n_samples()
    );

    for period in &cfg.split.test_periods {
        let records: Vec<_> = set
            .records()
            .iter()
            .filter(|r| period.contains(r.date))
            .cloned()
            .collect();
        if records.is_empty() {
            return Err(Error::Split(format!(
                "test period {} contains no records",
                period.slug()
            )));
        }
        let period_set = HindcastSet::new(records)?;
        let norm = apply_scaler(&scaler, &period_set, cfg.preprocess.encode_hour)?;
        let (ds, _) = build_sequences(&norm, window, lead, rule)?;
        write_dataset(&mut tracker, &dirs.dataset_test(&period.slug()), &ds)?;
        println!("prepare: test {} -> {} samples", period.slug(), ds.n_samples());
    }
    write_manifest(&mut tracker, &dirs, &cfg.canonical_toml()?, cfg.seed)?;
    tracker.commit();
    Ok(())
}

fn write_dataset(
    tracker: &mut OutputTracker,
    path: &std::path::Path,
    ds: &SequenceDataset,
) -> Result<()> {
    let mut bytes = Vec::new();
    ds.to_container()?.write_to(&mut bytes)?;
    tracker.write(path, &bytes)
}

fn read_dataset(path: &std::path::Path) -> Result<SequenceDataset> {
    let c = Container::load(path)?;
    SequenceDataset::from_container(&c)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn train_one(
    cfg: &RunConfig,
    ds_train: &SequenceDataset,
    arch: Architecture,
    seed: Option<u64>,
) -> Result<(Box<dyn SequenceModel>, TrainLog)> {
    train(&cfg.model_config(arch), ds_train, &cfg.train_config(seed))
}

pub fn train_cmd(cfg: &RunConfig, select: ModelSelect, seed: Option<u64>) -> Result<()> {
    let dirs = dirs(cfg);
    let mut tracker = OutputTracker::new();
    require_file(&dirs.dataset_train(), "hypobench prepare")?;
    let ds_train = read_dataset(&dirs.dataset_train())?;
    for arch in select.resolve(cfg) {
        let (model, log) = train_one(cfg, &ds_train, arch, seed)?;
        persist_model(&mut tracker, &dirs, arch, model.as_ref(), &log)?;
        println!(
            "train: {arch} finished {} epochs (final loss {:.6})",
            log.epochs.len(),
            log.epochs.last().map(|e| e.mean_loss).unwrap_or(f64::NAN)
        );
    }
    write_manifest(&mut tracker, &dirs, &cfg.canonical_toml()?, cfg.seed)?;
    tracker.commit();
    Ok(())
}

fn persist_model(
    tracker: &mut OutputTracker,
    dirs: &RunDirs,
    arch: Architecture,
    model: &dyn SequenceModel,
    log: &TrainLog,
) -> Result<()> {
    let ckpt = dirs.checkpoint(arch);
    if let Some(parent) = ckpt.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_model(model, &ckpt)?;
    tracker.track(&ckpt);
    tracker.write(&dirs.trainlog(arch), log.to_csv().as_bytes())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

pub fn evaluate(cfg: &RunConfig, select: ModelSelect) -> Result<()> {
    let dirs = dirs(cfg);
    let mut tracker = OutputTracker::new();
    let archs = select.resolve(cfg);
    let mut summary = String::from(emit::REPORT_CSV_HEADER);
    summary.push('\n');
    for &arch in &archs {
        let ckpt = dirs.checkpoint(arch);
        require_file(&ckpt, &format!("hypobench train --model {arch}"))?;
        let model = load_model(&ckpt)?;
        for period in &cfg.split.test_periods {
            let slug = period.slug();
            let ds_path = dirs.dataset_test(&slug);
            require_file(&ds_path, "hypobench prepare")?;
            let ds = read_dataset(&ds_path)?;
            let probs = predict_proba(model.as_ref(), &ds)?;
            let report = hypobench_core::metrics::evaluate(&probs, &ds.y)?;
            let (roc_curve, _) = roc_auc(&probs, &ds.y)?;
            let (pr_curve, _) = pr_auc(&probs, &ds.y)?;

            tracker.write(
                &dirs.report_csv(arch, &slug),
                format!(
                    "{}\n{}",
                    emit::REPORT_CSV_HEADER,
                    emit::report_csv_row(&arch.to_string(), &slug, &report)
                )
                .as_bytes(),
            )?;
            tracker.write(
                &dirs.report_txt(arch, &slug),
                emit::report_table(&arch.to_string(), &slug, &report).as_bytes(),
            )?;
            tracker.write(
                &dirs.curve_csv(arch, &slug, "roc"),
                emit::curve_csv(&roc_curve).as_bytes(),
            )?;
            tracker.write(
                &dirs.curve_svg(arch, &slug, "roc"),
                emit::curve_svg(&roc_curve, &format!("{arch} ROC {slug}")).as_bytes(),
            )?;
            tracker.write(
                &dirs.curve_csv(arch, &slug, "pr"),
                emit::curve_csv(&pr_curve).as_bytes(),
            )?;
            tracker.write(
                &dirs.curve_svg(arch, &slug, "pr"),
                emit::curve_svg(&pr_curve, &format!("{arch} PR {slug}")).as_bytes(),
            )?;
            summary.push_str(&emit::report_csv_row(&arch.to_string(), &slug, &report));
            println!(
                "evaluate: {arch} {slug}: AUC-ROC {:.4}, AUC-PR {:.4}, F1@opt {:.4}",
                report.auc_roc, report.auc_pr, report.at_optimal.f1
            );
        }
    }
    tracker.write(&dirs.summary_csv(), summary.as_bytes())?;
    write_manifest(&mut tracker, &dirs, &cfg.canonical_toml()?, cfg.seed)?;
    tracker.commit();
    Ok(())
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

pub fn compare(cfg: &RunConfig) -> Result<()> {
    let dirs = dirs(cfg);
    let mut tracker = OutputTracker::new();
    let archs = &cfg.models.enabled;
    if archs.len() < 2 {
        return Err(Error::Config(
            "comparison needs at least two enabled models".into(),
        ));
    }
    let mut models = Vec::new();
    for &arch in archs {
        let ckpt = dirs.checkpoint(arch);
        require_file(&ckpt, &format!("hypobench train --model {arch}"))?;
        models.push((arch, load_model(&ckpt)?));
    }
    for period in &cfg.split.test_periods {
        let slug = period.slug();
        let ds_path = dirs.dataset_test(&slug);
        require_file(&ds_path, "hypobench prepare")?;
        let ds = read_dataset(&ds_path)?;
        // Each model predicts at its own F1-optimal threshold.
        let mut predictions = Vec::new();
        for (arch, model) in &models {
            let probs = predict_proba(model.as_ref(), &ds)?;
            let (threshold, _) = optimize_threshold(&probs, &ds.y)?;
            let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= threshold)).collect();
            predictions.push((arch.to_string(), preds));
        }
        let results = pairwise_compare(&predictions, &ds.y)?;
        tracker.write(&dirs.compare_csv(&slug), emit::pairwise_csv(&results).as_bytes())?;
        tracker.write(
            &dirs.compare_svg(&slug),
            emit::pairwise_svg(&results, &format!("McNemar p-values {slug}")).as_bytes(),
        )?;
        for r in &results {
            println!(
                "compare {slug}: {} vs {} -> chi2 {:.4}, p {:.3e}, w {:.4} ({})",
                r.model_a,
                r.model_b,
                r.chi2,
                r.p_value,
                r.cohens_w,
                r.effect.label()
            );
        }
    }
    write_manifest(&mut tracker, &dirs, &cfg.canonical_toml()?, cfg.seed)?;
    tracker.commit();
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

pub fn bench(cfg: &RunConfig, seed: Option<u64>) -> Result<()> {
    if cfg.data.source == DataSource::Synthetic {
        synth(cfg, None)?;
    }
    prepare(cfg)?;

    // Train the enabled models concurrently (one thread each, every
    // trainer is single-threaded and independently seeded), then persist
    // in deterministic order.
    let dirs = dirs(cfg);
    let mut tracker = OutputTracker::new();
    let ds_train = read_dataset(&dirs.dataset_train())?;
    let archs = cfg.models.enabled.clone();
    let mut results: Vec<(Architecture, Result<(Box<dyn SequenceModel>, TrainLog)>)> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = archs
                .iter()
                .map(|&arch| {
                    let ds_ref = &ds_train;
                    scope.spawn(move || (arch, train_one(cfg, ds_ref, arch, seed)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("trainer panicked")).collect()
        });
    results.sort_by_key(|(arch, _)| arch.name());
    for (arch, outcome) in results {
        let (model, log) = outcome?;
        persist_model(&mut tracker, &dirs, arch, model.as_ref(), &log)?;
        println!(
            "bench: trained {arch} ({} epochs, final loss {:.6})",
            log.epochs.len(),
            log.epochs.last().map(|e| e.mean_loss).unwrap_or(f64::NAN)
        );
    }
    write_manifest(&mut tracker, &dirs, &cfg.canonical_toml()?, cfg.seed)?;
    tracker.commit();

    evaluate(cfg, ModelSelect::All)?;
    compare(cfg)?;
    Ok(())
}
