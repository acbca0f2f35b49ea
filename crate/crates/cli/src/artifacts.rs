//! Files in a model directory.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use psca_core::{LinearEncoder, Matrix, PscaError, Result, StandardizeStats, Vector};

pub const CODES_SOURCE: &str = "codes_source.psca";
pub const CODES_TARGET: &str = "codes_target.psca";
pub const ENCODER: &str = "encoder.csv";
pub const STANDARDIZE: &str = "standardize.csv";
pub const SPLIT: &str = "split.csv";
pub const PSEUDO_LABELS: &str = "pseudo_labels.csv";
pub const STAGE_ONE_TRACE: &str = "stage_one_trace.csv";
pub const STAGE_TWO_TRACE: &str = "stage_two_trace.csv";
pub const MANIFEST: &str = "manifest.txt";

/// Files to be written together into one directory.
#[derive(Debug, Default)]
pub struct Bundle {
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Writes every file into `dir`. On the first failure the files already
    /// written by this call are removed again.
    pub fn commit(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| PscaError::io(dir, e))?;
        let mut written: Vec<PathBuf> = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                return Err(PscaError::io(path, e));
            }
            written.push(path);
        }
        Ok(())
    }
}

fn float_rows<'a>(rows: impl Iterator<Item = Vec<f64>> + 'a) -> Vec<u8> {
    let mut out = Vec::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

fn parse_float_rows(path: &Path, expected_width: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| PscaError::io(path, e))?;
    let mut rows = Vec::new();
    let mut width = expected_width;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| PscaError::format(path, format!("line {}: not a number", lineno + 1)))?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(PscaError::format(path, format!("line {}: non-finite value", lineno + 1)));
        }
        match width {
            Some(w) if w != row.len() => {
                return Err(PscaError::format(
                    path,
                    format!("line {} has {} values, expected {w}", lineno + 1, row.len()),
                ))
            }
            _ => width = Some(row.len()),
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PscaError::format(path, "file is empty"));
    }
    Ok(rows)
}

/// One row of `Phi` per line.
pub fn encoder_bytes(enc: &LinearEncoder) -> Vec<u8> {
    float_rows(enc.phi.row_iter().map(|r| r.iter().copied().collect()))
}

pub fn read_encoder(path: &Path) -> Result<LinearEncoder> {
    let rows = parse_float_rows(path, None)?;
    let (r, d) = (rows.len(), rows[0].len());
    let phi = Matrix::from_fn(r, d, |i, j| rows[i][j]);
    Ok(LinearEncoder { phi, beta: 0.0 })
}

/// Two lines: per-feature means, then standard deviations.
pub fn stats_bytes(stats: &StandardizeStats) -> Vec<u8> {
    float_rows([stats.mean.iter().copied().collect(), stats.std.iter().copied().collect()].into_iter())
}

pub fn read_stats(path: &Path) -> Result<StandardizeStats> {
    let rows = parse_float_rows(path, None)?;
    if rows.len() != 2 {
        return Err(PscaError::format(path, format!("expected 2 lines, found {}", rows.len())));
    }
    if rows[1].iter().any(|&s| !(s > 0.0)) {
        return Err(PscaError::format(path, "standard deviations must be positive"));
    }
    Ok(StandardizeStats {
        mean: Vector::from_vec(rows[0].clone()),
        std: Vector::from_vec(rows[1].clone()),
    })
}

/// `index,role` with role `train` or `test`, in index order.
pub fn split_bytes(train: &[usize], test: &[usize]) -> Vec<u8> {
    let mut rows: Vec<(usize, &str)> = train
        .iter()
        .map(|&i| (i, "train"))
        .chain(test.iter().map(|&i| (i, "test")))
        .collect();
    rows.sort_unstable();
    let mut out = b"index,role\n".to_vec();
    for (i, role) in rows {
        let _ = writeln!(out, "{i},{role}");
    }
    out
}

pub fn read_split(path: &Path) -> Result<(Vec<usize>, Vec<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| PscaError::io(path, e))?;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || PscaError::format(path, format!("line {}: expected index,role", lineno + 1));
        let (i, role) = line.split_once(',').ok_or_else(bad)?;
        let i: usize = i.trim().parse().map_err(|_| bad())?;
        match role.trim() {
            "train" => train.push(i),
            "test" => test.push(i),
            _ => return Err(bad()),
        }
    }
    Ok((train, test))
}

/// `index,label` for the training target samples.
pub fn pseudo_label_bytes(indices: &[usize], labels: &[usize]) -> Vec<u8> {
    let mut out = b"index,label\n".to_vec();
    for (i, l) in indices.iter().zip(labels) {
        let _ = writeln!(out, "{i},{l}");
    }
    out
}

pub fn read_pseudo_labels(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| PscaError::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || PscaError::format(path, format!("line {}: expected index,label", lineno + 1));
        let (i, l) = line.split_once(',').ok_or_else(bad)?;
        out.push((i.trim().parse().map_err(|_| bad())?, l.trim().parse().map_err(|_| bad())?));
    }
    Ok(out)
}

/// `iter,objective` rows for the stage-two trace.
pub fn stage_two_trace_bytes(trace: &[f64]) -> Vec<u8> {
    let mut out = b"iter,objective\n".to_vec();
    for (i, v) in trace.iter().enumerate() {
        let _ = writeln!(out, "{},{v:.16e}", i + 1);
    }
    out
}
