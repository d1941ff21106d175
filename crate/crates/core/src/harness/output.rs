//! Plot-ready CSV/JSON outputs and their parsers.
//!
//! Floats are written in Rust's shortest round-trip form, so every file
//! parses back to exactly the values that were emitted.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::drifters::Position;
use crate::error::{check_len, Error, Result};
use crate::sw::SwGrid;

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows = rdr.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// One time slice of a state series.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRow {
    pub k: usize,
    pub t: f64,
    pub values: DVector<f64>,
}

/// Wide CSV: `k, t, z0, z1, ...`.
pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.values.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["k".to_string(), "t".to_string()];
    header.extend((0..dim).map(|i| format!("z{i}")));
    w.write_record(&header)?;
    for r in rows {
        check_len("series row", dim, r.values.len())?;
        let mut rec = vec![r.k.to_string(), r.t.to_string()];
        rec.extend(r.values.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_series_csv(path: &Path) -> Result<Vec<SeriesRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{}: {e}", path.display())));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let k = rec
            .get(0)
            .ok_or_else(|| Error::Parse("missing k".into()))?
            .parse::<usize>()
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let t = parse(rec.get(1).ok_or_else(|| Error::Parse("missing t".into()))?)?;
        let values = rec.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?;
        out.push(SeriesRow {
            k,
            t,
            values: DVector::from_vec(values),
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub fraction: f64,
}

/// Uniform bins over `[0, max error]`, right-open except the last. All-zero
/// errors give one degenerate bin at 0.
pub fn emit_histogram(errors: &[f64], bins: usize) -> Result<Vec<HistBin>> {
    if errors.is_empty() || bins == 0 {
        return Err(Error::InvalidConfig("histogram needs errors and at least one bin".into()));
    }
    crate::error::check_finite(errors, "histogram errors")?;
    let total = errors.len() as f64;
    let max = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if max == 0.0 {
        return Ok(vec![HistBin {
            lo: 0.0,
            hi: 0.0,
            count: errors.len(),
            fraction: 1.0,
        }]);
    }
    let width = max / bins as f64;
    let mut counts = vec![0usize; bins];
    for e in errors {
        let b = ((e.abs() / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(b, count)| HistBin {
            lo: b as f64 * width,
            hi: if b + 1 == bins { max } else { (b + 1) as f64 * width },
            count,
            fraction: count as f64 / total,
        })
        .collect())
}

/// Fraction of `errors` with magnitude at most `tol`.
pub fn fraction_within(errors: &[f64], tol: f64) -> f64 {
    errors.iter().filter(|e| e.abs() <= tol).count() as f64 / errors.len().max(1) as f64
}

/// One cell of one field in a snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub field: String,
    pub i: usize,
    pub j: usize,
    pub x: f64,
    pub y: f64,
    pub reference: f64,
    pub filter: f64,
    pub diff: f64,
}

pub const FIELDS: [&str; 3] = ["eta", "u", "v"];

/// Gridded `η, u, v` of a reference state and a filter mean, with their
/// difference.
pub fn emit_snapshot(grid: &SwGrid, reference: &DVector<f64>, filter: &DVector<f64>) -> Result<Vec<SnapshotRow>> {
    let n = grid.cells();
    check_len("snapshot reference", 3 * n, reference.len())?;
    check_len("snapshot filter", 3 * n, filter.len())?;
    let mut rows = Vec::with_capacity(3 * n);
    for (f, name) in FIELDS.iter().enumerate() {
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let idx = f * n + grid.flat(i, j);
                rows.push(SnapshotRow {
                    field: (*name).into(),
                    i,
                    j,
                    x: grid.x(i),
                    y: grid.y(j),
                    reference: reference[idx],
                    filter: filter[idx],
                    diff: filter[idx] - reference[idx],
                });
            }
        }
    }
    Ok(rows)
}

/// Drifter track point; `kind` is `true` or `predicted`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub kind: String,
    pub drifter: usize,
    pub k: usize,
    pub x: f64,
    pub y: f64,
}

/// Flattens `tracks[k][drifter]` for `k <= up_to`.
pub fn track_rows(kind: &str, tracks: &[Vec<Position>], up_to: usize) -> Vec<TrackRow> {
    tracks
        .iter()
        .enumerate()
        .take(up_to + 1)
        .flat_map(|(k, ps)| {
            ps.iter().enumerate().map(move |(d, p)| TrackRow {
                kind: kind.into(),
                drifter: d,
                k,
                x: p.x,
                y: p.y,
            })
        })
        .collect()
}

/// Per-repeat, per-step chain diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub repeat: usize,
    pub k: usize,
    pub acceptance: f64,
    pub mean_lag1: f64,
    pub unique_ancestors: usize,
    pub flow_evaluations: usize,
    pub index_moves: usize,
    pub zero_acceptance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub phase: String,
    pub seconds: f64,
    pub threads: usize,
}

/// Accuracy part of a benchmark row (timings live in `timing.csv`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub d: usize,
    pub size: String,
    pub repeats: usize,
    pub fraction: f64,
}
