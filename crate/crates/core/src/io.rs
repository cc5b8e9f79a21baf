//! Output formats: plot-ready CSV tables and the binary snapshot container.
//!
//! Snapshot layout (little-endian):
//!
//! ```text
//! b"FNLS1" | u32 N | f64 L | f64 s | f64 t | N × (f64 re, f64 im)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FnlsError, Result};
use crate::harness::{ConvergenceRow, GrowthPoint, TrackRecord};
use crate::model::InvariantRecord;
use crate::reference::ProfileResult;
use crate::spectral::{Field, SpectralGrid};

pub const SNAPSHOT_MAGIC: &[u8; 5] = b"FNLS1";
const HEADER_LEN: usize = 5 + 4 + 3 * 8;

pub const INVARIANTS_HEADER: &str = "t,I1,I2,H";
pub const TRACKING_HEADER: &str = "t,amplitude,peak_x,speed";
pub const CONVERGENCE_HEADER: &str = "dt,err_v,rate_v,err_w,rate_w";
pub const ERROR_GROWTH_HEADER: &str = "t,err_v,err_w";

/// Field plus the metadata stored alongside it.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub field: Field,
    pub s: f64,
    pub t: f64,
}

pub fn encode_snapshot(field: &Field, s: f64, t: f64) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * field.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    out.extend_from_slice(&grid.half_length().to_le_bytes());
    out.extend_from_slice(&s.to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    for z in field.values() {
        out.extend_from_slice(&z.re.to_le_bytes());
        out.extend_from_slice(&z.im.to_le_bytes());
    }
    out
}

fn f64_at(bytes: &[u8], offset: usize) -> f64 {
    f64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8-byte slice"))
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    if bytes.len() < HEADER_LEN || &bytes[..5] != SNAPSHOT_MAGIC {
        return Err(FnlsError::Snapshot("missing FNLS1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().expect("4-byte slice")) as usize;
    let l = f64_at(bytes, 9);
    let s = f64_at(bytes, 17);
    let t = f64_at(bytes, 25);
    let expected = HEADER_LEN + 16 * n;
    if bytes.len() != expected {
        return Err(FnlsError::Snapshot(format!(
            "expected {expected} bytes for N = {n}, found {}",
            bytes.len()
        )));
    }
    let grid = SpectralGrid::new(n, l).map_err(|e| FnlsError::Snapshot(e.to_string()))?;
    let values = (0..n)
        .map(|j| {
            let at = HEADER_LEN + 16 * j;
            Complex64::new(f64_at(bytes, at), f64_at(bytes, at + 8))
        })
        .collect();
    Ok(Snapshot {
        field: Field::new(&grid, values)?,
        s,
        t,
    })
}

pub fn write_snapshot(path: &Path, field: &Field, s: f64, t: f64) -> Result<()> {
    fs::write(path, encode_snapshot(field, s, t))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    decode_snapshot(&fs::read(path)?)
}

/// Sidecar JSON written next to a generated profile snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetadata {
    pub n: usize,
    pub l: f64,
    pub s: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub residual: f64,
    pub iterations: usize,
    pub stabilizer: f64,
}

impl ProfileMetadata {
    pub fn from_result(res: &ProfileResult) -> Self {
        let grid = res.profile.grid();
        ProfileMetadata {
            n: grid.n(),
            l: grid.half_length(),
            s: res.s,
            lambda1: res.lambda1,
            lambda2: res.lambda2,
            residual: res.residual,
            iterations: res.iterations,
            stabilizer: res.stabilizer,
        }
    }

    /// Path of the sidecar for a snapshot at `snapshot`.
    pub fn sidecar_path(snapshot: &Path) -> PathBuf {
        snapshot.with_extension("json")
    }

    pub fn save_beside(&self, snapshot: &Path) -> Result<()> {
        fs::write(Self::sidecar_path(snapshot), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Reads the sidecar if one exists.
    pub fn load_beside(snapshot: &Path) -> Result<Option<Self>> {
        let path = Self::sidecar_path(snapshot);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    }
}

/// Full round-trip formatting (17 significant digits).
fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String");
}

fn opt(out: &mut String, v: Option<f64>) {
    if let Some(v) = v {
        num(out, v);
    }
}

fn table<T>(header: &str, rows: &[T], mut row: impl FnMut(&mut String, &T)) -> String {
    let mut out = String::with_capacity(header.len() + 1 + rows.len() * 96);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        row(&mut out, r);
        out.push('\n');
    }
    out
}

pub fn invariants_csv(records: &[InvariantRecord]) -> String {
    table(INVARIANTS_HEADER, records, |out, r| {
        num(out, r.t);
        out.push(',');
        num(out, r.mass);
        out.push(',');
        num(out, r.momentum);
        out.push(',');
        num(out, r.hamiltonian);
    })
}

pub fn tracking_csv(records: &[TrackRecord]) -> String {
    table(TRACKING_HEADER, records, |out, r| {
        num(out, r.t);
        out.push(',');
        num(out, r.amplitude);
        out.push(',');
        num(out, r.peak_x);
        out.push(',');
        opt(out, r.speed);
    })
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    table(CONVERGENCE_HEADER, rows, |out, r| {
        num(out, r.dt);
        out.push(',');
        num(out, r.err_v);
        out.push(',');
        opt(out, r.rate_v);
        out.push(',');
        num(out, r.err_w);
        out.push(',');
        opt(out, r.rate_w);
    })
}

pub fn error_growth_csv(points: &[GrowthPoint]) -> String {
    table(ERROR_GROWTH_HEADER, points, |out, p| {
        num(out, p.t);
        out.push(',');
        num(out, p.err_v);
        out.push(',');
        num(out, p.err_w);
    })
}

/// Parsed CSV: header names and rows of optional numbers (empty cells are `None`).
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

pub fn parse_csv(text: &str) -> Result<CsvTable> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| FnlsError::config("csv", "empty table"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(FnlsError::config(
                "csv",
                format!("row {} has {} cells, header has {}", i + 1, cells.len(), header.len()),
            ));
        }
        let row = cells
            .into_iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>()
                        .map(Some)
                        .map_err(|e| FnlsError::config("csv", format!("row {}: {e}", i + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}
