//! Field snapshots: `<stem>.json` holds the metadata, `<stem>.csv` the
//! values with columns `a` (or `a_1..a_n`), `b` when present, and the value.
//! Floats are written in shortest round-trip form, so reading a snapshot back
//! reproduces the slice bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Axis, FieldKind, Layout, SolverError, TimeAxis, ValueField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub kind: FieldKind,
    pub level: usize,
    pub time: f64,
    pub time_axis: TimeAxis,
    pub a_axes: Vec<Axis>,
    pub b_axis: Option<Axis>,
    /// Caller-supplied digest of the inputs; resume refuses mismatches.
    pub fingerprint: String,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub values: Vec<f64>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SolverError {
    SolverError::Snapshot(format!("{}: {e}", path.display()))
}

/// Column names `a` / `a_1..a_n`, then `b` if present, then `value_name`.
pub fn slice_header(n: usize, with_b: bool, value_name: &str) -> Vec<String> {
    let mut header: Vec<String> = if n == 1 {
        vec!["a".into()]
    } else {
        (1..=n).map(|i| format!("a_{i}")).collect()
    };
    if with_b {
        header.push("b".into());
    }
    header.push(value_name.into());
    header
}

/// Writes one slice as CSV, one row per node in storage order.
pub fn write_slice_csv<W: Write>(
    out: W,
    a_axes: &[Axis],
    b_axis: Option<&Axis>,
    values: &[f64],
    value_name: &str,
) -> Result<(), csv::Error> {
    let nb = b_axis.map_or(1, |b| b.count);
    let layout = Layout::new(a_axes, nb);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(slice_header(a_axes.len(), b_axis.is_some(), value_name))?;
    let mut row = Vec::with_capacity(a_axes.len() + 2);
    for p in 0..layout.na {
        for j in 0..nb {
            row.clear();
            for (i, ax) in a_axes.iter().enumerate() {
                row.push(ax.point(layout.coord(p, i)).to_string());
            }
            if let Some(b) = b_axis {
                row.push(super::budget_point(b, j).to_string());
            }
            row.push(values[p * nb + j].to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.csv`; returns both paths.
pub fn write_snapshot(
    dir: &Path,
    stem: &str,
    field: &ValueField,
    level: usize,
    values: &[f64],
    fingerprint: &str,
) -> Result<(PathBuf, PathBuf), SolverError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    write_slice_csv(file, &field.a_axes, field.b_axis.as_ref(), values, "W").map_err(|e| io_err(&csv_path, e))?;
    let meta = SnapshotMeta {
        kind: field.kind,
        level,
        time: field.time.time(level),
        time_axis: field.time,
        a_axes: field.a_axes.clone(),
        b_axis: field.b_axis,
        fingerprint: fingerprint.to_string(),
        csv: format!("{stem}.csv"),
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| io_err(&json_path, e))?;
    fs::write(&json_path, text).map_err(|e| io_err(&json_path, e))?;
    Ok((json_path, csv_path))
}

pub fn read_snapshot(json_path: &Path) -> Result<Snapshot, SolverError> {
    let text = fs::read_to_string(json_path).map_err(|e| io_err(json_path, e))?;
    let meta: SnapshotMeta = serde_json::from_str(&text).map_err(|e| io_err(json_path, e))?;
    let csv_path = json_path.with_file_name(&meta.csv);
    let mut reader = csv::Reader::from_path(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| io_err(&csv_path, e))?;
        let last = record.get(record.len().saturating_sub(1)).unwrap_or("");
        values.push(last.parse::<f64>().map_err(|e| io_err(&csv_path, e))?);
    }
    let expected: usize = meta.a_axes.iter().map(|a| a.count).product::<usize>() * meta.b_axis.map_or(1, |b| b.count);
    if values.len() != expected {
        return Err(SolverError::Snapshot(format!(
            "{} holds {} values, metadata implies {expected}",
            csv_path.display(),
            values.len()
        )));
    }
    Ok(Snapshot { meta, values })
}

/// The snapshot with the lowest level (furthest progress) in `dir` whose
/// fingerprint and kind match.
pub fn latest_snapshot(dir: &Path, kind: FieldKind, fingerprint: &str) -> Result<Option<Snapshot>, SolverError> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(_) => return Ok(None),
    };
    let mut best: Option<Snapshot> = None;
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Ok(snap) = read_snapshot(&path) else { continue };
        if snap.meta.kind != kind || snap.meta.fingerprint != fingerprint {
            continue;
        }
        if best.as_ref().is_none_or(|b| snap.meta.level < b.meta.level) {
            best = Some(snap);
        }
    }
    Ok(best)
}
