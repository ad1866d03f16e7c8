//! CSV ingestion and emission for hindcast sets.
//!
//! Schema (header required, UTF-8, comma separator):
//! `date,cell_id,depth_bin,lon,lat,pea,soc,dcp_temp,do_bottom,land`
//! with ISO-8601 dates and `land` as `0`/`1`. Floats are written with
//! shortest round-trip formatting, so write→load→write is byte-stable.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::dataio::{HindcastRecord, HindcastSet};
use crate::error::{Error, Result};

/// Column order of the documented schema.
pub const CSV_COLUMNS: [&str; 10] = [
    "date", "cell_id", "depth_bin", "lon", "lat", "pea", "soc", "dcp_temp", "do_bottom", "land",
];

/// Write a hindcast set in the documented schema.
pub fn write_hindcast(set: &HindcastSet, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_hindcast_to(set, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Write a hindcast set to any writer (records in `(cell_id, date)` order).
pub fn write_hindcast_to(set: &HindcastSet, w: &mut impl Write) -> Result<()> {
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for r in set.records() {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.date.format("%Y-%m-%d"),
            r.cell_id,
            r.depth_bin,
            r.lon,
            r.lat,
            r.pea,
            r.soc,
            r.dcp_temp,
            r.do_bottom,
            u8::from(r.land),
        )?;
    }
    Ok(())
}

/// Load a hindcast CSV, validating the schema and the data contract.
pub fn load_hindcast(path: &Path) -> Result<HindcastSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("cannot open {}: {e}", path.display()),
            )),
            _ => Error::Schema(e.to_string()),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    let mut index = [usize::MAX; 10];
    for (want_idx, want) in CSV_COLUMNS.iter().enumerate() {
        match headers.iter().position(|h| h == *want) {
            Some(pos) => index[want_idx] = pos,
            None => return Err(Error::Schema(format!("missing column `{want}`"))),
        }
    }
    for h in headers.iter() {
        if !CSV_COLUMNS.contains(&h) {
            return Err(Error::Schema(format!("unexpected column `{h}`")));
        }
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> &str { row.get(index[i]).unwrap_or("") };
        let parse_f64 = |i: usize| -> Result<f64> {
            field(i).parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("`{}` is not a number in column `{}`", field(i), CSV_COLUMNS[i]),
            })
        };

        let date = NaiveDate::parse_from_str(field(0), "%Y-%m-%d").map_err(|_| Error::Parse {
            line,
            message: format!("`{}` is not an ISO-8601 date", field(0)),
        })?;
        let cell_id = field(1).parse::<u32>().map_err(|_| Error::Parse {
            line,
            message: format!("`{}` is not a cell id", field(1)),
        })?;
        let depth_bin = field(2).parse::<u16>().map_err(|_| Error::Parse {
            line,
            message: format!("`{}` is not a depth bin", field(2)),
        })?;
        let land = match field(9) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("`{other}` is not a 0/1 land flag"),
                })
            }
        };
        records.push(HindcastRecord {
            date,
            cell_id,
            depth_bin,
            lon: parse_f64(3)?,
            lat: parse_f64(4)?,
            pea: parse_f64(5)?,
            soc: parse_f64(6)?,
            dcp_temp: parse_f64(7)?,
            do_bottom: parse_f64(8)?,
            land,
        });
    }
    HindcastSet::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    const HEADER: &str = "date,cell_id,depth_bin,lon,lat,pea,soc,dcp_temp,do_bottom,land";

    #[test]
    fn loads_well_formed_rows() {
        let f = write_temp(&format!(
            "{HEADER}\n2020-08-01,0,0,-95.0,28.0,10.0,5.0,0.02,3.5,0\n\
             2020-08-01,1,1,-94.9,28.0,12.0,6.0,0.03,1.2,0\n\
             2020-08-02,0,0,-95.0,28.0,11.0,5.5,0.02,3.1,0\n"
        ));
        let set = load_hindcast(f.path()).unwrap();
        assert_eq!(set.records().len(), 3);
        assert_eq!(set.cells(), 2);
        assert_eq!(set.days(), 2);
    }

    #[test]
    fn missing_column_names_it() {
        let f = write_temp(
            "date,cell_id,depth_bin,lon,lat,pea,dcp_temp,do_bottom,land\n\
             2020-08-01,0,0,-95.0,28.0,10.0,0.02,3.5,0\n",
        );
        let err = load_hindcast(f.path()).unwrap_err();
        match err {
            Error::Schema(msg) => assert!(msg.contains("`soc`"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_is_integrity_error() {
        let f = write_temp(&format!(
            "{HEADER}\n2020-08-01,5,0,-95.0,28.0,10.0,5.0,0.02,3.5,0\n\
             2020-08-01,5,0,-95.0,28.0,10.0,5.0,0.02,3.4,0\n"
        ));
        assert!(matches!(load_hindcast(f.path()), Err(Error::Integrity(_))));
    }

    #[test]
    fn non_numeric_field_reports_line() {
        let f = write_temp(&format!(
            "{HEADER}\n2020-08-01,0,0,-95.0,28.0,10.0,5.0,0.02,3.5,0\n\
             2020-08-02,0,0,-95.0,28.0,oops,5.0,0.02,3.5,0\n"
        ));
        match load_hindcast(f.path()).unwrap_err() {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("pea"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_the_set() {
        let set = crate::dataio::generate_synthetic(&crate::dataio::SynthConfig {
            n_cells: 12,
            n_days: 30,
            seasons: vec![crate::dataio::Season {
                year: 2020,
                month_start: 6,
                month_end: 6,
            }],
            ..Default::default()
        })
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_hindcast(&set, f.path()).unwrap();
        let loaded = load_hindcast(f.path()).unwrap();
        assert_eq!(set, loaded);
    }
}
