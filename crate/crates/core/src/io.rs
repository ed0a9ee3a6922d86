//! Persistence: binary field files, center lists and JSON lines.
//!
//! A field file is the magic `MBFIELD1`, a little-endian `u64` header
//! length, a JSON header `{"N":…,"L":…,"M":…}` and then the `M^N` node
//! values as little-endian `f64` in row-major order (last axis fastest).

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, Grid};
use crate::point::{self, Point};

const MAGIC: &[u8; 8] = b"MBFIELD1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "N")]
    dim: usize,
    #[serde(rename = "L")]
    half_width: f64,
    #[serde(rename = "M")]
    points: usize,
}

pub fn write_field(mut out: impl Write, u: &Field) -> Result<()> {
    let g = u.grid();
    let header = serde_json::to_vec(&Header { dim: g.dim(), half_width: g.half_width(), points: g.points() })?;
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(8 * u.values().len());
    for v in u.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_field(mut input: impl Read) -> Result<Field> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a field file".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 20 {
        return Err(Error::Format(format!("header length {len} is implausible")));
    }
    let mut header = vec![0u8; len as usize];
    input.read_exact(&mut header)?;
    let h: Header = serde_json::from_slice(&header)?;
    let grid = Grid::new(h.dim, h.half_width, h.points)?;
    let mut raw = Vec::new();
    input.read_to_end(&mut raw)?;
    if raw.len() != 8 * grid.len() {
        return Err(Error::Format(format!("expected {} values, found {} bytes", grid.len(), raw.len())));
    }
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Field::from_values(grid, values)
}

/// Centers as CSV rows of `dim` coordinates, without a header.
pub fn write_centers(out: impl Write, centers: &[Point], dim: usize) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for c in centers {
        w.write_record(c[..dim].iter().map(|x| x.to_string())).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads CSV rows of `dim` coordinates; blank lines and lines starting with
/// `#` are skipped.
pub fn read_centers(input: impl Read, dim: usize) -> Result<Vec<Point>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != dim {
            return Err(Error::Format(format!("row {} has {} coordinates, expected {dim}", line + 1, rec.len())));
        }
        let c = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Format(format!("row {}: {e}", line + 1))))
            .collect::<Result<Vec<_>>>()?;
        out.push(point::from_slice(&c));
    }
    Ok(out)
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(mut out: impl Write, items: &[T]) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut out, it)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(input: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
