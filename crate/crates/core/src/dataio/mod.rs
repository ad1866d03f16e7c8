//! Hindcast data: synthetic generation and CSV ingestion.
//!
//! A [`HindcastSet`] holds daily per-cell records of the three
//! environmental drivers (PEA, SOC, DCP_Temp) plus bottom dissolved
//! oxygen. Land cells are masked with zeroed fields. The CSV schema is
//! documented in `docs/formats.md`.

mod csvio;
mod synth;

pub use csvio::{load_hindcast, write_hindcast, write_hindcast_to, CSV_COLUMNS};
pub use synth::generate_synthetic;

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One grid cell on one day.
#[derive(Debug, Clone, PartialEq)]
pub struct HindcastRecord {
    pub date: NaiveDate,
    pub cell_id: u32,
    pub depth_bin: u16,
    pub lon: f64,
    pub lat: f64,
    /// Potential energy anomaly, J/m³ (water-column stratification).
    pub pea: f64,
    /// Sediment oxygen consumption, mmol O₂/m²/day.
    pub soc: f64,
    /// Temperature-dependent decomposition rate, 1/day.
    pub dcp_temp: f64,
    /// Bottom dissolved oxygen, mg/L.
    pub do_bottom: f64,
    pub land: bool,
}

impl HindcastRecord {
    fn validate(&self) -> Result<()> {
        if self.land {
            if self.pea != 0.0 || self.soc != 0.0 || self.dcp_temp != 0.0 || self.do_bottom != 0.0
            {
                return Err(Error::Domain(format!(
                    "land cell {} on {} must carry all-zero fields",
                    self.cell_id, self.date
                )));
            }
            return Ok(());
        }
        for (name, v) in [
            ("pea", self.pea),
            ("soc", self.soc),
            ("dcp_temp", self.dcp_temp),
            ("do_bottom", self.do_bottom),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "{name} = {v} for cell {} on {} (must be finite and >= 0)",
                    self.cell_id, self.date
                )));
            }
        }
        Ok(())
    }
}

/// Immutable collection of hindcast records.
///
/// Construction validates the data contract: one record per
/// `(date, cell_id)`, a fixed depth bin per cell, non-negative driver
/// values, and zeroed land cells. Records are kept sorted by
/// `(cell_id, date)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HindcastSet {
    records: Vec<HindcastRecord>,
    cells: usize,
    days: usize,
    depth_bins: usize,
}

impl HindcastSet {
    pub fn new(mut records: Vec<HindcastRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Integrity("hindcast set has no records".into()));
        }
        records.sort_by_key(|r| (r.cell_id, r.date));
        let mut cell_depth: BTreeMap<u32, u16> = BTreeMap::new();
        let mut dates: Vec<NaiveDate> = Vec::new();
        for pair in records.windows(2) {
            if pair[0].cell_id == pair[1].cell_id && pair[0].date == pair[1].date {
                return Err(Error::Integrity(format!(
                    "duplicate record for cell {} on {}",
                    pair[0].cell_id, pair[0].date
                )));
            }
        }
        for r in &records {
            r.validate()?;
            match cell_depth.insert(r.cell_id, r.depth_bin) {
                Some(prev) if prev != r.depth_bin => {
                    return Err(Error::Integrity(format!(
                        "cell {} changes depth bin from {prev} to {}",
                        r.cell_id, r.depth_bin
                    )));
                }
                _ => {}
            }
            dates.push(r.date);
        }
        dates.sort_unstable();
        dates.dedup();
        let depth_bins = {
            let mut bins: Vec<u16> = cell_depth.values().copied().collect();
            bins.sort_unstable();
            bins.dedup();
            bins.len()
        };
        Ok(HindcastSet {
            cells: cell_depth.len(),
            days: dates.len(),
            depth_bins,
            records,
        })
    }

    pub fn records(&self) -> &[HindcastRecord] {
        &self.records
    }

    /// Number of distinct cells.
    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Number of distinct dates.
    pub fn days(&self) -> usize {
        self.days
    }

    /// Number of distinct depth bins.
    pub fn depth_bins(&self) -> usize {
        self.depth_bins
    }

    /// Fraction of sea (non-land) records that are hypoxic under a strict
    /// `do_bottom < threshold` rule.
    pub fn positive_rate(&self, threshold: f64) -> f64 {
        let mut sea = 0usize;
        let mut pos = 0usize;
        for r in &self.records {
            if !r.land {
                sea += 1;
                if r.do_bottom < threshold {
                    pos += 1;
                }
            }
        }
        if sea == 0 {
            0.0
        } else {
            pos as f64 / sea as f64
        }
    }
}

/// One contiguous run of calendar months in one year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Season {
    pub year: i32,
    pub month_start: u32,
    pub month_end: u32,
}

impl Season {
    pub fn validate(&self) -> Result<()> {
        if !(1..=12).contains(&self.month_start)
            || !(1..=12).contains(&self.month_end)
            || self.month_start > self.month_end
        {
            return Err(Error::Config(format!(
                "season {}-{}..{} has an invalid month range",
                self.year, self.month_start, self.month_end
            )));
        }
        Ok(())
    }

    /// All days of the season in chronological order.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(self.year, self.month_start, 1)
            .expect("validated season start");
        let mut out = Vec::new();
        let mut d = start;
        while d.year() == self.year && d.month() <= self.month_end {
            out.push(d);
            d = d.succ_opt().expect("date overflow");
        }
        out
    }

    pub fn day_count(&self) -> usize {
        self.dates().len()
    }
}

/// Configuration of the synthetic hindcast generator.
///
/// `driver_scale` and `land_fraction` are generator knobs beyond the core
/// fields: scaling drivers to zero removes the drawdown signal entirely,
/// and `land_fraction` controls how many cells are masked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_cells: usize,
    /// Total day count; must equal the sum of the season lengths.
    pub n_days: usize,
    pub seasons: Vec<Season>,
    /// Target fraction of hypoxic sea records, in (0, 0.5).
    pub hypoxia_base_rate: f64,
    pub rng_seed: u64,
    /// Scales the irreducible day-to-day noise in bottom DO; 0 makes the
    /// label a deterministic function of the driver history.
    pub noise_scale: f64,
    /// Scales all drivers; 0 pins them (and the drawdown) to zero.
    pub driver_scale: f64,
    pub land_fraction: f64,
    pub depth_bin_count: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_cells: 200,
            n_days: 120,
            seasons: (2009..=2012)
                .map(|year| Season {
                    year,
                    month_start: 6,
                    month_end: 6,
                })
                .collect(),
            hypoxia_base_rate: 0.10,
            rng_seed: 7,
            noise_scale: 1.0,
            driver_scale: 1.0,
            land_fraction: 0.10,
            depth_bin_count: 3,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_cells == 0 {
            return Err(Error::Config("n_cells must be positive".into()));
        }
        if !(self.hypoxia_base_rate > 0.0 && self.hypoxia_base_rate < 0.5) {
            return Err(Error::Config(format!(
                "hypoxia_base_rate {} must lie in (0, 0.5)",
                self.hypoxia_base_rate
            )));
        }
        // A 7-day window plus a 1-day lead is the smallest usable series.
        if self.n_days < 8 {
            return Err(Error::Config(format!(
                "n_days {} is shorter than window + 1",
                self.n_days
            )));
        }
        if self.seasons.is_empty() {
            return Err(Error::Config("at least one season is required".into()));
        }
        for s in &self.seasons {
            s.validate()?;
        }
        let total: usize = self.seasons.iter().map(|s| s.day_count()).sum();
        if total != self.n_days {
            return Err(Error::Config(format!(
                "n_days {} does not match the seasons' total of {total} days",
                self.n_days
            )));
        }
        if !(self.noise_scale >= 0.0) || !(self.driver_scale >= 0.0) {
            return Err(Error::Config("noise_scale and driver_scale must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.land_fraction) {
            return Err(Error::Config(format!(
                "land_fraction {} must lie in [0, 1)",
                self.land_fraction
            )));
        }
        if self.depth_bin_count == 0 {
            return Err(Error::Config("depth_bin_count must be positive".into()));
        }
        Ok(())
    }
}
