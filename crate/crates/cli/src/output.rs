//! CSV and text writers. Floats are written with 17 significant digits so
//! they read back bit for bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clonesel_core::{Grid, TotalsSeries, Trajectory};

use crate::config::num;
use crate::error::{CliError, Result};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Indices `0, stride, 2 stride, ...` plus the last one.
pub fn strided(len: usize, stride: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..len).step_by(stride.max(1)).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

/// Columns `t, rho_1 .. rho_M, s`.
pub fn write_totals(path: &Path, totals: &TotalsSeries, stride: usize) -> Result<()> {
    let mut w = writer(path)?;
    let m = totals.num_stages();
    let mut header = vec!["t".to_string()];
    header.extend((1..=m).map(|i| format!("rho_{i}")));
    header.push("s".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for j in strided(totals.len(), stride) {
        let mut row = vec![num(totals.times()[j])];
        row.extend(totals.rho(j).iter().map(|&v| num(v)));
        row.push(num(totals.signals()[j]));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One file per stage in long form `t, x, density`, the density divided by
/// the stage total so each time slice integrates to one.
pub fn write_heatmaps(dir: &Path, trajectory: &Trajectory, grid: &Grid, frames: usize) -> Result<Vec<PathBuf>> {
    let snaps = &trajectory.snapshots;
    let stride = snaps.len().div_ceil(frames.max(1)).max(1);
    let picks = strided(snaps.len(), stride);
    let num_stages = snaps.first().map_or(0, |s| s.num_stages());
    let mut paths = Vec::with_capacity(num_stages);
    for i in 0..num_stages {
        let path = dir.join(format!("heatmap_stage{}.csv", i + 1));
        let mut w = writer(&path)?;
        w.write_record(["t", "x", "density"]).map_err(csv_err(&path))?;
        for &j in &picks {
            let snap = &snaps[j];
            let values = snap.stage(i);
            let total = grid.integrate(values);
            let t = num(snap.time());
            for (x, v) in grid.points().iter().zip(values) {
                let scaled = if total > 0.0 { v / total } else { 0.0 };
                w.write_record([t.as_str(), &num(*x), &num(scaled)])
                    .map_err(csv_err(&path))?;
            }
        }
        w.flush().map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}
