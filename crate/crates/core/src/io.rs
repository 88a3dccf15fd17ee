//! Artifact export: CSV tables, flat binary snapshots with JSON sidecars.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! `read_table_csv(write_table_csv(x)) == x` bit for bit.

use crate::error::{Error, Result};
use crate::layer::LayerProfile;
use crate::nonlocal::Grid1D;
use crate::solver::SolutionRecord;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

pub fn write_table_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("csv.tmp");
    {
        let mut w = csv::Writer::from_path(&tmp).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            if r.len() != header.len() {
                return Err(Error::Format(format!("row of {} values under {} columns", r.len(), header.len())));
            }
            w.write_record(r.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_table_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number '{s}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(value)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Sidecar describing a flat binary snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    /// `[nx, ny]`; values are row-major, node `(i, j)` at `i * ny + j`.
    pub shape: Vec<usize>,
    pub dtype: String,
    pub time: f64,
    pub eps: f64,
    pub a: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn write_snapshot(path: &Path, values: &[f64], meta: &SnapshotMeta) -> Result<()> {
    let expect: usize = meta.shape.iter().product();
    if values.len() != expect {
        return Err(Error::Format(format!("{} values for shape {:?}", values.len(), meta.shape)));
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    write_json(&path.with_extension("json"), meta)
}

pub fn read_snapshot(path: &Path) -> Result<(Vec<f64>, SnapshotMeta)> {
    let meta: SnapshotMeta = serde_json::from_str(&fs::read_to_string(path.with_extension("json"))?)?;
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("snapshot size is not a multiple of 8 bytes".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if values.len() != meta.shape.iter().product::<usize>() {
        return Err(Error::Format("snapshot length does not match its sidecar".into()));
    }
    Ok((values, meta))
}

/// `crossings.csv`, `energy.csv`, and (optionally) every full snapshot.
pub fn write_record(dir: &Path, rec: &SolutionRecord, snapshots: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = rec.crossings.first().map(|c| c.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    let rows: Vec<Vec<f64>> = rec
        .times
        .iter()
        .zip(&rec.crossings)
        .map(|(t, c)| std::iter::once(*t).chain(c.iter().copied()).collect())
        .collect();
    write_table_csv(&dir.join("crossings.csv"), &header, &rows)?;
    let rows: Vec<Vec<f64>> = rec.times.iter().zip(&rec.energy).map(|(t, e)| vec![*t, *e]).collect();
    write_table_csv(&dir.join("energy.csv"), &["t".into(), "E".into()], &rows)?;
    if snapshots {
        for (k, s) in rec.snapshots.iter().enumerate() {
            let shape = if s.full { vec![rec.grid.nx(), rec.grid.ny()] } else { vec![rec.grid.nx(), 1] };
            let meta = SnapshotMeta {
                shape,
                dtype: "float64-le".into(),
                time: s.time,
                eps: rec.eps,
                a: rec.a,
                x: rec.grid.x.nodes().to_vec(),
                y: if s.full { rec.grid.y.nodes().to_vec() } else { vec![0.0] },
            };
            write_snapshot(&dir.join(format!("snapshot_{k:04}.bin")), &s.values, &meta)?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMeta {
    pub kind: String,
    pub c0: f64,
    pub alpha: f64,
    pub half_width: f64,
    pub n: usize,
}

/// Layer trace and slope on `grid` as CSV, constants as JSON.
pub fn write_layer(dir: &Path, layer: &LayerProfile, grid: &Grid1D) -> Result<()> {
    let rows: Vec<Vec<f64>> = grid
        .nodes()
        .into_iter()
        .map(|x| vec![x, layer.trace(x), layer.trace_slope(x)])
        .collect();
    write_table_csv(&dir.join("layer.csv"), &["x".into(), "phi0".into(), "phi0_x".into()], &rows)?;
    let meta = LayerMeta {
        kind: format!("{:?}", layer.kind()),
        c0: layer.c0(),
        alpha: layer.alpha(),
        half_width: grid.half_width,
        n: grid.n,
    };
    write_json(&dir.join("layer.json"), &meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let rows = vec![
            vec![0.1 + 0.2, 1.0 / 3.0, -0.0],
            vec![f64::MIN_POSITIVE, 1e300, std::f64::consts::PI],
            vec![f64::NAN, -1.5e-17, 2.0],
        ];
        let header: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        write_table_csv(&p, &header, &rows).unwrap();
        let (h, back) = read_table_csv(&p).unwrap();
        assert_eq!(h, header);
        for (r, s) in rows.iter().zip(&back) {
            for (a, b) in r.iter().zip(s) {
                assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let meta = SnapshotMeta {
            shape: vec![2, 3],
            dtype: "float64-le".into(),
            time: 0.5,
            eps: 0.1,
            a: 1.0,
            x: vec![0.0, 1.0],
            y: vec![0.0, 0.5, 1.0],
        };
        let vals = vec![1.0, 2.0, 3.5, -4.0, 5.25, 1e-300];
        write_snapshot(&p, &vals, &meta).unwrap();
        let (v, m) = read_snapshot(&p).unwrap();
        assert_eq!(v, vals);
        assert_eq!(m, meta);
        assert!(write_snapshot(&p, &vals[..5], &meta).is_err());
    }
}
