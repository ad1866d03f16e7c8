//! From hindcast records to model-ready sequences: label binarization,
//! cyclical time encoding, per-depth min-max normalization, temporal
//! splitting, and sliding-window construction.

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dataio::HindcastSet;
use crate::error::{Error, Result};

/// Names of the driver features, in normalized-feature order.
pub const DRIVER_NAMES: [&str; 3] = ["pea", "soc", "dcp_temp"];

/// Default hypoxia boundary, mg/L.
pub const DEFAULT_THRESHOLD: f64 = 2.0;
/// Default sliding-window length, days.
pub const DEFAULT_WINDOW: usize = 7;
/// Default forecast lead, days (0 reproduces a nowcast).
pub const DEFAULT_LEAD: usize = 1;

/// Label rule knobs. The boundary is strict `<` by default; the inclusive
/// variant (`<=`) is exposed because the boundary convention differs
/// between sources.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BinarizeRule {
    pub threshold: f64,
    pub inclusive: bool,
}

impl Default for BinarizeRule {
    fn default() -> Self {
        BinarizeRule {
            threshold: DEFAULT_THRESHOLD,
            inclusive: false,
        }
    }
}

/// 1 iff `do_bottom` is hypoxic under the strict default rule
/// (`do_bottom < threshold`).
pub fn binarize(do_bottom: f64, threshold: f64) -> Result<u8> {
    binarize_with(
        do_bottom,
        BinarizeRule {
            threshold,
            inclusive: false,
        },
    )
}

pub fn binarize_with(do_bottom: f64, rule: BinarizeRule) -> Result<u8> {
    if !do_bottom.is_finite() || do_bottom < 0.0 {
        return Err(Error::Domain(format!(
            "do_bottom {do_bottom} must be finite and >= 0"
        )));
    }
    let hypoxic = if rule.inclusive {
        do_bottom <= rule.threshold
    } else {
        do_bottom < rule.threshold
    };
    Ok(u8::from(hypoxic))
}

/// Sine/cosine encodings of day-of-year (0-based) and month (1..=12).
///
/// Periodic encodings keep year boundaries continuous: day 364 of a
/// 365-day year lands next to day 0.
pub fn encode_cyclical(day_of_year: f64, year_length: f64, month: u32) -> Result<(f64, f64, f64, f64)> {
    if !(day_of_year >= 0.0 && day_of_year < year_length) {
        return Err(Error::Domain(format!(
            "day_of_year {day_of_year} outside [0, {year_length})"
        )));
    }
    if !(1..=12).contains(&month) {
        return Err(Error::Domain(format!("month {month} outside 1..=12")));
    }
    let tau = std::f64::consts::TAU;
    let doy_angle = tau * day_of_year / year_length;
    let month_angle = tau * f64::from(month - 1) / 12.0;
    Ok((
        doy_angle.sin(),
        doy_angle.cos(),
        month_angle.sin(),
        month_angle.cos(),
    ))
}

fn year_length(date: NaiveDate) -> f64 {
    if date.leap_year() {
        366.0
    } else {
        365.0
    }
}

/// Engineered per-record features: normalized drivers plus cyclical time
/// encodings. The hour pair is only emitted when hour encoding is enabled
/// (daily data makes it constant, so it is off by default).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub pea_n: f64,
    pub soc_n: f64,
    pub dcp_n: f64,
    pub doy_sin: f64,
    pub doy_cos: f64,
    pub month_sin: f64,
    pub month_cos: f64,
    pub hour_sin: f64,
    pub hour_cos: f64,
}

impl FeatureVector {
    pub fn flatten_into(&self, include_hour: bool, out: &mut Vec<f64>) {
        out.extend_from_slice(&[
            self.pea_n,
            self.soc_n,
            self.dcp_n,
            self.doy_sin,
            self.doy_cos,
            self.month_sin,
            self.month_cos,
        ]);
        if include_hour {
            out.push(self.hour_sin);
            out.push(self.hour_cos);
        }
    }
}

/// Number of features per timestep.
pub fn feature_count(include_hour: bool) -> usize {
    if include_hour {
        9
    } else {
        7
    }
}

/// Per-depth, per-driver min/max learned on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalerParams {
    per_depth: BTreeMap<u16, [(f64, f64); 3]>,
}

impl ScalerParams {
    pub fn depth_bins(&self) -> impl Iterator<Item = u16> + '_ {
        self.per_depth.keys().copied()
    }

    pub fn bounds(&self, depth_bin: u16) -> Option<&[(f64, f64); 3]> {
        self.per_depth.get(&depth_bin)
    }
}

/// Learn min/max per depth bin and driver from training sea records.
///
/// Fit must only ever see the training split; land records are masked
/// zeros and do not inform the bounds.
pub fn fit_scaler(train: &HindcastSet) -> Result<ScalerParams> {
    let mut per_depth: BTreeMap<u16, [(f64, f64); 3]> = BTreeMap::new();
    for r in train.records().iter().filter(|r| !r.land) {
        let entry = per_depth
            .entry(r.depth_bin)
            .or_insert([(f64::INFINITY, f64::NEG_INFINITY); 3]);
        for (slot, v) in entry.iter_mut().zip([r.pea, r.soc, r.dcp_temp]) {
            slot.0 = slot.0.min(v);
            slot.1 = slot.1.max(v);
        }
    }
    if per_depth.is_empty() {
        return Err(Error::Domain(
            "scaler fit: training split has no sea records".into(),
        ));
    }
    Ok(ScalerParams { per_depth })
}

/// Linear map `(v - min) / (max - min)`; a constant feature maps to 0.
/// Values outside the training range are not clipped.
pub fn scale_value(value: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (value - min) / (max - min)
    } else {
        0.0
    }
}

/// One record with engineered features attached.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRecord {
    pub date: NaiveDate,
    pub cell_id: u32,
    pub depth_bin: u16,
    pub land: bool,
    pub do_bottom: f64,
    pub features: FeatureVector,
}

/// A normalized, model-ready series collection.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSet {
    pub records: Vec<NormalizedRecord>,
    pub include_hour: bool,
}

/// Apply a fitted scaler plus cyclical encodings to a set.
///
/// Land records keep zeroed drivers (mask semantics). A depth bin that
/// never appeared during fitting is an error.
pub fn apply_scaler(
    params: &ScalerParams,
    set: &HindcastSet,
    include_hour: bool,
) -> Result<NormalizedSet> {
    let mut records = Vec::with_capacity(set.records().len());
    for r in set.records() {
        let (pea_n, soc_n, dcp_n) = if r.land {
            (0.0, 0.0, 0.0)
        } else {
            let bounds = params.bounds(r.depth_bin).ok_or_else(|| {
                Error::Domain(format!(
                    "depth bin {} was not present in the training data",
                    r.depth_bin
                ))
            })?;
            (
                scale_value(r.pea, bounds[0].0, bounds[0].1),
                scale_value(r.soc, bounds[1].0, bounds[1].1),
                scale_value(r.dcp_temp, bounds[2].0, bounds[2].1),
            )
        };
        let (doy_sin, doy_cos, month_sin, month_cos) = encode_cyclical(
            f64::from(r.date.ordinal0()),
            year_length(r.date),
            r.date.month(),
        )?;
        // Daily records carry hour 0; the pair is constant unless the
        // input ever gains sub-daily resolution.
        records.push(NormalizedRecord {
            date: r.date,
            cell_id: r.cell_id,
            depth_bin: r.depth_bin,
            land: r.land,
            do_bottom: r.do_bottom,
            features: FeatureVector {
                pea_n,
                soc_n,
                dcp_n,
                doy_sin,
                doy_cos,
                month_sin,
                month_cos,
                hour_sin: 0.0,
                hour_cos: 1.0,
            },
        });
    }
    Ok(NormalizedSet {
        records,
        include_hour,
    })
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    pub fn validate(&self) -> Result<()> {
        if self.start > self.end {
            return Err(Error::Config(format!(
                "date range {}..{} is reversed",
                self.start, self.end
            )));
        }
        Ok(())
    }

    /// Stable token for file names: `YYYY-MM-DD_YYYY-MM-DD`.
    pub fn slug(&self) -> String {
        format!("{}_{}", self.start.format("%Y-%m-%d"), self.end.format("%Y-%m-%d"))
    }
}

/// Split records by date: everything inside any test period goes to test,
/// the rest to train. Periods must not overlap; both splits must be
/// non-empty.
pub fn temporal_split(
    set: &HindcastSet,
    test_periods: &[DateRange],
) -> Result<(HindcastSet, HindcastSet)> {
    if test_periods.is_empty() {
        return Err(Error::Split("no test periods given".into()));
    }
    for p in test_periods {
        p.validate()?;
    }
    let mut sorted = test_periods.to_vec();
    sorted.sort_by_key(|p| p.start);
    for pair in sorted.windows(2) {
        if pair[1].start <= pair[0].end {
            return Err(Error::Split(format!(
                "test periods {} and {} overlap",
                pair[0].slug(),
                pair[1].slug()
            )));
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for r in set.records() {
        if test_periods.iter().any(|p| p.contains(r.date)) {
            test.push(r.clone());
        } else {
            train.push(r.clone());
        }
    }
    if train.is_empty() {
        return Err(Error::Split("temporal split left the training set empty".into()));
    }
    if test.is_empty() {
        return Err(Error::Split("temporal split left the test set empty".into()));
    }
    Ok((HindcastSet::new(train)?, HindcastSet::new(test)?))
}

/// Per-sample provenance carried through resampling and evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMeta {
    /// Date of the prediction target (window end plus lead).
    pub target_date: NaiveDate,
    pub cell_id: u32,
    pub depth_bin: u16,
    /// True for SMOTE-generated samples.
    pub synthetic: bool,
}

/// samples × timesteps × features array with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    /// Row-major `(n_samples, window, n_features)`.
    pub x: Vec<f64>,
    pub y: Vec<u8>,
    pub meta: Vec<SampleMeta>,
    pub window: usize,
    pub lead: usize,
    pub n_features: usize,
}

impl SequenceDataset {
    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn sample_len(&self) -> usize {
        self.window * self.n_features
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.sample_len();
        &self.x[i * len..(i + 1) * len]
    }

    /// Counts of (negatives, positives).
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|&&y| y == 1).count();
        (self.y.len() - pos, pos)
    }
}

/// Outcome counters from sequence construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    /// Contiguous runs too short for `window + lead`, skipped with a warning.
    pub short_series_skipped: usize,
    /// Land cells excluded from sequence construction.
    pub land_cells_skipped: usize,
}

/// Closed-form sample count for one contiguous series.
pub fn expected_samples(days: usize, window: usize, lead: usize) -> usize {
    (days + 1).saturating_sub(window + lead)
}

/// Build sliding-window sequences per cell.
///
/// For each cell and valid end day `t`, the sample covers days
/// `[t-window+1, t]` and the label is the binarized DO at `t+lead`.
/// Cells with date gaps are split into contiguous runs; runs shorter than
/// `window + lead` are skipped and counted. Land cells carry no signal
/// (all-zero drivers) and are excluded.
pub fn build_sequences(
    set: &NormalizedSet,
    window: usize,
    lead: usize,
    rule: BinarizeRule,
) -> Result<(SequenceDataset, BuildStats)> {
    if window < 1 {
        return Err(Error::Config("window must be >= 1".into()));
    }
    let n_features = feature_count(set.include_hour);
    let mut stats = BuildStats::default();

    // Group by cell; records arrive sorted by (cell, date).
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut meta = Vec::new();
    let mut i = 0;
    let records = &set.records;
    while i < records.len() {
        let cell = records[i].cell_id;
        let mut j = i;
        while j < records.len() && records[j].cell_id == cell {
            j += 1;
        }
        let series = &records[i..j];
        i = j;
        if series[0].land {
            stats.land_cells_skipped += 1;
            continue;
        }
        // Split into contiguous runs at date gaps.
        let mut run_start = 0;
        for k in 0..=series.len() {
            let run_ends = k == series.len()
                || (k > 0 && series[k].date != series[k - 1].date.succ_opt().expect("date overflow"));
            if !run_ends {
                continue;
            }
            let run = &series[run_start..k];
            run_start = k;
            if run.len() < window + lead {
                if !run.is_empty() {
                    stats.short_series_skipped += 1;
                }
                continue;
            }
            for t in (window - 1)..(run.len() - lead) {
                for r in &run[t + 1 - window..=t] {
                    r.features.flatten_into(set.include_hour, &mut x);
                }
                let target = &run[t + lead];
                y.push(binarize_with(target.do_bottom, rule)?);
                meta.push(SampleMeta {
                    target_date: target.date,
                    cell_id: cell,
                    depth_bin: run[t].depth_bin,
                    synthetic: false,
                });
            }
        }
    }

    Ok((
        SequenceDataset {
            x,
            y,
            meta,
            window,
            lead,
            n_features,
        },
        stats,
    ))
}

// ---------------------------------------------------------------------------
// Container serialization (prepared datasets on disk)
// ---------------------------------------------------------------------------

impl SequenceDataset {
    pub fn to_container(&self) -> Result<crate::container::Container> {
        let n = self.n_samples();
        let mut c = crate::container::Container::new();
        c.insert("x", vec![n, self.window, self.n_features], self.x.clone())?;
        c.insert("y", vec![n], self.y.iter().map(|&v| f64::from(v)).collect())?;
        c.insert(
            "meta_date",
            vec![n],
            self.meta
                .iter()
                .map(|m| f64::from(m.target_date.num_days_from_ce()))
                .collect(),
        )?;
        c.insert(
            "meta_cell",
            vec![n],
            self.meta.iter().map(|m| f64::from(m.cell_id)).collect(),
        )?;
        c.insert(
            "meta_depth",
            vec![n],
            self.meta.iter().map(|m| f64::from(m.depth_bin)).collect(),
        )?;
        c.insert(
            "meta_synthetic",
            vec![n],
            self.meta.iter().map(|m| f64::from(u8::from(m.synthetic))).collect(),
        )?;
        c.insert_scalar("window", self.window as f64)?;
        c.insert_scalar("lead", self.lead as f64)?;
        Ok(c)
    }

    pub fn from_container(c: &crate::container::Container) -> Result<Self> {
        let x_entry = c.get("x")?;
        if x_entry.shape.len() != 3 {
            return Err(Error::Schema(format!(
                "dataset entry `x` must be 3-D, got {:?}",
                x_entry.shape
            )));
        }
        let (n, window, n_features) = (x_entry.shape[0], x_entry.shape[1], x_entry.shape[2]);
        let stored_window = c.scalar("window")? as usize;
        if stored_window != window {
            return Err(Error::Schema(format!(
                "window scalar {stored_window} disagrees with x shape {window}"
            )));
        }
        let y_entry = c.get("y")?;
        let dates = c.get("meta_date")?;
        let cells = c.get("meta_cell")?;
        let depths = c.get("meta_depth")?;
        let synth = c.get("meta_synthetic")?;
        for (name, e) in [
            ("y", y_entry),
            ("meta_date", dates),
            ("meta_cell", cells),
            ("meta_depth", depths),
            ("meta_synthetic", synth),
        ] {
            if e.values.len() != n {
                return Err(Error::Schema(format!(
                    "dataset entry `{name}` has {} values, expected {n}",
                    e.values.len()
                )));
            }
        }
        let meta = (0..n)
            .map(|i| -> Result<SampleMeta> {
                let date = NaiveDate::from_num_days_from_ce_opt(dates.values[i] as i32)
                    .ok_or_else(|| Error::Schema(format!("bad date number {}", dates.values[i])))?;
                Ok(SampleMeta {
                    target_date: date,
                    cell_id: cells.values[i] as u32,
                    depth_bin: depths.values[i] as u16,
                    synthetic: synth.values[i] != 0.0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SequenceDataset {
            x: x_entry.values.clone(),
            y: y_entry.values.iter().map(|&v| u8::from(v != 0.0)).collect(),
            meta,
            window,
            lead: c.scalar("lead")? as usize,
            n_features,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, Season, SynthConfig};

    #[test]
    fn binarize_matches_the_strict_rule() {
        assert_eq!(binarize(1.5, 2.0).unwrap(), 1);
        assert_eq!(binarize(3.7, 2.0).unwrap(), 0);
        assert_eq!(binarize(2.0, 2.0).unwrap(), 0);
        assert_eq!(
            binarize_with(2.0, BinarizeRule { threshold: 2.0, inclusive: true }).unwrap(),
            1
        );
        assert!(binarize(-0.1, 2.0).is_err());
    }

    #[test]
    fn cyclical_encoding_basics() {
        let (s, c, ms, mc) = encode_cyclical(0.0, 365.0, 1).unwrap();
        assert!(s.abs() < 1e-12 && (c - 1.0).abs() < 1e-12);
        assert!(ms.abs() < 1e-12 && (mc - 1.0).abs() < 1e-12);

        // Quarter cycle: day 91 of a 364-day year.
        let (s, c, _, _) = encode_cyclical(91.0, 364.0, 4).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && c.abs() < 1e-12);

        assert!(encode_cyclical(365.0, 365.0, 1).is_err());
        assert!(encode_cyclical(3.0, 365.0, 13).is_err());
    }

    #[test]
    fn year_boundary_is_continuous() {
        let a = encode_cyclical(364.0, 365.0, 12).unwrap();
        let b = encode_cyclical(0.0, 365.0, 12).unwrap();
        assert!((a.0 - b.0).abs() < 0.02);
        assert!((a.1 - b.1).abs() < 0.02);
    }

    #[test]
    fn scaler_maps_train_range_to_unit_interval() {
        assert_eq!(scale_value(2.0, 2.0, 6.0), 0.0);
        assert_eq!(scale_value(4.0, 2.0, 6.0), 0.5);
        assert_eq!(scale_value(6.0, 2.0, 6.0), 1.0);
        // constant feature
        assert_eq!(scale_value(5.0, 5.0, 5.0), 0.0);
        // out-of-range test value is not clipped
        assert_eq!(scale_value(8.0, 2.0, 6.0), 1.5);
    }

    fn toy_set() -> HindcastSet {
        generate_synthetic(&SynthConfig {
            n_cells: 20,
            n_days: 61,
            seasons: vec![Season { year: 2009, month_start: 6, month_end: 7 }],
            land_fraction: 0.2,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn split_is_disjoint_and_counts_add_up() {
        let set = toy_set();
        let periods = [DateRange {
            start: NaiveDate::from_ymd_opt(2009, 7, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2009, 7, 31).unwrap(),
        }];
        let (train, test) = temporal_split(&set, &periods).unwrap();
        assert_eq!(
            train.records().len() + test.records().len(),
            set.records().len()
        );
        assert!(train.records().iter().all(|r| !periods[0].contains(r.date)));
        assert!(test.records().iter().all(|r| periods[0].contains(r.date)));
    }

    #[test]
    fn split_covering_everything_errors() {
        let set = toy_set();
        let all = [DateRange {
            start: NaiveDate::from_ymd_opt(2009, 1, 1).unwrap(),
            end: NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(),
        }];
        assert!(matches!(temporal_split(&set, &all), Err(Error::Split(_))));
    }

    #[test]
    fn sequence_counts_match_closed_form() {
        assert_eq!(expected_samples(10, 7, 1), 3);
        assert_eq!(expected_samples(7, 7, 0), 1);
        assert_eq!(expected_samples(7, 7, 1), 0);

        let set = toy_set();
        let scaler = fit_scaler(&set).unwrap();
        let normalized = apply_scaler(&scaler, &set, false).unwrap();
        let (ds, stats) = build_sequences(&normalized, 7, 1, BinarizeRule::default()).unwrap();
        let sea_cells = set.cells() - stats.land_cells_skipped;
        assert_eq!(ds.n_samples(), sea_cells * expected_samples(61, 7, 1));
        assert_eq!(ds.n_features, 7);
        assert_eq!(stats.short_series_skipped, 0);
    }

    #[test]
    fn short_series_are_skipped_with_a_count() {
        let set = generate_synthetic(&SynthConfig {
            n_cells: 5,
            n_days: 30,
            seasons: vec![Season { year: 2010, month_start: 6, month_end: 6 }],
            land_fraction: 0.0,
            ..Default::default()
        })
        .unwrap();
        let scaler = fit_scaler(&set).unwrap();
        let normalized = apply_scaler(&scaler, &set, false).unwrap();
        let (ds, stats) = build_sequences(&normalized, 16, 15, BinarizeRule::default()).unwrap();
        assert_eq!(ds.n_samples(), 0);
        assert_eq!(stats.short_series_skipped, 5);
    }

    #[test]
    fn dataset_container_round_trip() {
        let set = toy_set();
        let scaler = fit_scaler(&set).unwrap();
        let normalized = apply_scaler(&scaler, &set, false).unwrap();
        let (ds, _) = build_sequences(&normalized, 7, 1, BinarizeRule::default()).unwrap();
        let c = ds.to_container().unwrap();
        let back = SequenceDataset::from_container(&c).unwrap();
        assert_eq!(ds, back);
    }
}
