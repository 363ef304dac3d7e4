//! Table persistence: a binary column store and a CSV export.
//!
//! Binary layout (little endian): the magic `BBMFKPP1`, a `u64` length and
//! that many bytes of JSON metadata, a `u64` slice count, then per slice
//! `t: f64`, `x0: f64` and `cells` values.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FkppTable, Slice, TableMeta};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"BBMFKPP1";

impl FkppTable {
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        let meta = serde_json::to_vec(&self.meta)?;
        w.write_all(&(meta.len() as u64).to_le_bytes())?;
        w.write_all(&meta)?;
        w.write_all(&(self.slices.len() as u64).to_le_bytes())?;
        for s in &self.slices {
            w.write_all(&s.t.to_le_bytes())?;
            w.write_all(&s.x0.to_le_bytes())?;
            for v in &s.values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Config("not an F-KPP table file".into()));
        }
        let read_u64 = |r: &mut dyn Read| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let read_f64 = |r: &mut dyn Read| -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let len = read_u64(r)? as usize;
        let mut meta = vec![0u8; len];
        r.read_exact(&mut meta)?;
        let meta: TableMeta = serde_json::from_slice(&meta)?;
        let count = read_u64(r)? as usize;
        let mut slices = Vec::with_capacity(count);
        for _ in 0..count {
            let t = read_f64(r)?;
            let x0 = read_f64(r)?;
            let values = (0..meta.cells).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
            slices.push(Slice { t, x0, values });
        }
        FkppTable::new(meta, slices)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_binary(&mut BufReader::new(std::fs::File::open(path)?))
    }

    /// CSV `t,x,u` for the stored times in `times` (all when `None`), preceded by one
    /// `# {json}` metadata line. `header` is extra JSON merged into that line.
    pub fn write_csv(&self, w: &mut impl Write, times: Option<&[f64]>, header: Option<&serde_json::Value>) -> Result<()> {
        let mut meta = serde_json::to_value(&self.meta)?;
        if let (Some(obj), Some(serde_json::Value::Object(extra))) = (meta.as_object_mut(), header) {
            for (k, v) in extra {
                obj.insert(k.clone(), v.clone());
            }
        }
        writeln!(w, "# {}", serde_json::to_string(&meta)?)?;
        writeln!(w, "t,x,u")?;
        let dx = self.meta.dx;
        for s in &self.slices {
            if let Some(ts) = times {
                if !ts.iter().any(|&t| (t - s.t).abs() <= 1e-9) {
                    continue;
                }
            }
            for (i, u) in s.values.iter().enumerate() {
                writeln!(w, "{:?},{:?},{:?}", s.t, s.x(i, dx), u)?;
            }
        }
        Ok(())
    }

    /// Reads a CSV written by [`FkppTable::write_csv`] with all slices.
    pub fn read_csv(r: &mut impl Read) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let first = lines.next().ok_or_else(|| Error::Config("empty table CSV".into()))??;
        let json = first.strip_prefix("# ").ok_or_else(|| Error::Config("missing metadata line".into()))?;
        let meta: TableMeta = serde_json::from_str(json)?;
        lines.next();
        let mut slices: Vec<Slice> = Vec::new();
        for line in lines {
            let line = line?;
            let mut it = line.split(',').map(|f| f.parse::<f64>());
            let parse_err = || Error::Config(format!("bad CSV row {line:?}"));
            let t = it.next().ok_or_else(parse_err)?.map_err(|_| parse_err())?;
            let x = it.next().ok_or_else(parse_err)?.map_err(|_| parse_err())?;
            let u = it.next().ok_or_else(parse_err)?.map_err(|_| parse_err())?;
            match slices.last_mut() {
                Some(s) if s.t == t => s.values.push(u),
                _ => slices.push(Slice { t, x0: x, values: vec![u] }),
            }
        }
        FkppTable::new(meta, slices)
    }
}
