//! Binary container of named, shaped f64 arrays.
//!
//! Used for model checkpoints and prepared sequence datasets. The layout
//! is fixed and documented in `docs/formats.md`:
//!
//! ```text
//! magic   : 4 bytes, b"HBC1"
//! count   : u32 LE, number of entries
//! entry   : name_len u32 LE, name bytes (UTF-8),
//!           ndim u32 LE, dims (u64 LE each),
//!           values (f64 LE, row-major, prod(dims) of them)
//! ```
//!
//! Round-trips are bit-exact: values are written as raw IEEE-754 bits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HBC1";

/// One named array.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// In-memory container, ordered by entry name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Container {
    entries: BTreeMap<String, Entry>,
}

impl Container {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, values: Vec<f64>) -> Result<()> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Contract(format!(
                "container entry `{name}`: shape {shape:?} wants {expected} values, got {}",
                values.len()
            )));
        }
        self.entries.insert(name.to_string(), Entry { shape, values });
        Ok(())
    }

    /// Convenience for scalar metadata entries.
    pub fn insert_scalar(&mut self, name: &str, value: f64) -> Result<()> {
        self.insert(name, vec![1], vec![value])
    }

    pub fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Schema(format!("container entry `{name}` is missing")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let e = self.get(name)?;
        if e.values.len() != 1 {
            return Err(Error::Schema(format!(
                "container entry `{name}` is not a scalar"
            )));
        }
        Ok(e.values[0])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, entry) in &self.entries {
            let name_bytes = name.as_bytes();
            w.write_all(&(name_bytes.len() as u32).to_le_bytes())?;
            w.write_all(name_bytes)?;
            w.write_all(&(entry.shape.len() as u32).to_le_bytes())?;
            for &d in &entry.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &entry.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Schema(format!(
                "bad container magic {:?}; expected {:?}",
                magic, MAGIC
            )));
        }
        let count = read_u32(r)? as usize;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|e| Error::Schema(format!("container entry name is not UTF-8: {e}")))?;
            let ndim = read_u32(r)? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let len: usize = shape.iter().product();
            let mut values = vec![0.0f64; len];
            let mut buf = [0u8; 8];
            for v in values.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            entries.insert(name, Entry { shape, values });
        }
        Ok(Container { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut c = Container::new();
        c.insert("w", vec![2, 3], vec![1.5, -0.25, f64::MIN_POSITIVE, 3.7e300, 0.1, -0.0])
            .unwrap();
        c.insert_scalar("step", 42.0).unwrap();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let back = Container::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(c, back);
        let mut buf2 = Vec::new();
        back.write_to(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn missing_entry_is_a_schema_error() {
        let c = Container::new();
        assert!(matches!(c.get("nope"), Err(Error::Schema(_))));
    }

    #[test]
    fn shape_value_mismatch_rejected() {
        let mut c = Container::new();
        let err = c.insert("w", vec![2, 2], vec![1.0]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
