//! Feature/label containers, CSV interchange, target splitting and the
//! synthetic two-domain generator.
//!
//! CSV rows are `label,f_1,...,f_d` with `-1` marking an unlabeled sample.
//! Feature matrices are stored `d x n` (one sample per column).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg;
use crate::{Matrix, PscaError, Result, Vector};

/// Labeled source domain plus (optionally labeled) target domain.
///
/// Target labels are never used for training; they only feed evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub source_features: Matrix,
    pub source_labels: Vec<usize>,
    pub target_features: Matrix,
    pub target_labels: Option<Vec<usize>>,
    pub num_classes: usize,
}

impl DomainDataset {
    pub fn new(
        source_features: Matrix,
        source_labels: Vec<usize>,
        target_features: Matrix,
        target_labels: Option<Vec<usize>>,
        num_classes: usize,
    ) -> Result<Self> {
        let ds = DomainDataset {
            source_features,
            source_labels,
            target_features,
            target_labels,
            num_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let c = self.num_classes;
        if c == 0 {
            return Err(PscaError::Config("num_classes must be positive".into()));
        }
        if self.source_features.nrows() != self.target_features.nrows() {
            return Err(PscaError::Shape(format!(
                "source has {} features, target has {}",
                self.source_features.nrows(),
                self.target_features.nrows()
            )));
        }
        if self.source_features.nrows() == 0 {
            return Err(PscaError::Shape("feature dimension is zero".into()));
        }
        if self.source_labels.len() != self.source_features.ncols() {
            return Err(PscaError::Shape(format!(
                "{} source labels for {} source samples",
                self.source_labels.len(),
                self.source_features.ncols()
            )));
        }
        if self.target_features.ncols() == 0 {
            return Err(PscaError::Data("target domain is empty".into()));
        }
        let mut seen = vec![false; c];
        for &l in &self.source_labels {
            if l >= c {
                return Err(PscaError::Label(format!("source label {l} outside [0, {c})")));
            }
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(PscaError::Label(format!(
                "class {missing} has no source samples"
            )));
        }
        if let Some(tl) = &self.target_labels {
            if tl.len() != self.target_features.ncols() {
                return Err(PscaError::Shape(format!(
                    "{} target labels for {} target samples",
                    tl.len(),
                    self.target_features.ncols()
                )));
            }
            if let Some(&l) = tl.iter().find(|&&l| l >= c) {
                return Err(PscaError::Label(format!("target label {l} outside [0, {c})")));
            }
        }
        if self
            .source_features
            .iter()
            .chain(self.target_features.iter())
            .any(|v| !v.is_finite())
        {
            return Err(PscaError::Data("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.source_features.nrows()
    }

    pub fn num_source(&self) -> usize {
        self.source_features.ncols()
    }

    pub fn num_target(&self) -> usize {
        self.target_features.ncols()
    }

    /// `[X_s, X_t]`, the `d x n` matrix of all samples.
    pub fn combined_features(&self) -> Matrix {
        let (d, ns, nt) = (self.feature_dim(), self.num_source(), self.num_target());
        let mut x = Matrix::zeros(d, ns + nt);
        x.columns_mut(0, ns).copy_from(&self.source_features);
        x.columns_mut(ns, nt).copy_from(&self.target_features);
        x
    }

    /// Copy of the dataset keeping only the given target columns.
    pub fn with_target_subset(&self, indices: &[usize]) -> DomainDataset {
        DomainDataset {
            source_features: self.source_features.clone(),
            source_labels: self.source_labels.clone(),
            target_features: self.target_features.select_columns(indices),
            target_labels: self
                .target_labels
                .as_ref()
                .map(|tl| indices.iter().map(|&i| tl[i]).collect()),
            num_classes: self.num_classes,
        }
    }

    pub fn split_target(&self, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
        split_target(self.num_target(), spec)
    }
}

/// Features and per-sample labels parsed from one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub features: Matrix,
    pub labels: Vec<Option<usize>>,
}

impl CsvTable {
    /// Labels with every sample required to be labeled.
    pub fn required_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| PscaError::Label(format!("sample {i} is unlabeled"))))
            .collect()
    }

    /// `Some` only when every sample carries a label.
    pub fn complete_labels(&self) -> Option<Vec<usize>> {
        self.labels.iter().copied().collect()
    }
}

pub fn load_csv(path: &Path, expect_labels: bool, num_classes: Option<usize>) -> Result<CsvTable> {
    let file = File::open(path).map_err(|e| PscaError::io(path, e))?;
    read_csv(BufReader::new(file), path, expect_labels, num_classes)
}

/// Parses the CSV layout from any reader; `path` is only used in messages.
pub fn read_csv<R: BufRead>(
    reader: R,
    path: &Path,
    expect_labels: bool,
    num_classes: Option<usize>,
) -> Result<CsvTable> {
    let mut columns: Vec<f64> = Vec::new();
    let mut labels = Vec::new();
    let mut width: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PscaError::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 2 {
            return Err(PscaError::format(
                path,
                format!("line {}: need a label and at least one feature", lineno + 1),
            ));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(PscaError::format(
                    path,
                    format!(
                        "line {}: {} columns, expected {w}",
                        lineno + 1,
                        fields.len()
                    ),
                ))
            }
            _ => {}
        }

        let label: i64 = fields[0].parse().map_err(|_| {
            PscaError::format(path, format!("line {}: bad label {:?}", lineno + 1, fields[0]))
        })?;
        let label = match label {
            -1 => None,
            l if l < -1 => {
                return Err(PscaError::Label(format!("line {}: label {l} < -1", lineno + 1)))
            }
            l => {
                let l = l as usize;
                if let Some(c) = num_classes {
                    if l >= c {
                        return Err(PscaError::Label(format!(
                            "line {}: label {l} outside [0, {c})",
                            lineno + 1
                        )));
                    }
                }
                Some(l)
            }
        };
        if expect_labels && label.is_none() {
            return Err(PscaError::Label(format!(
                "line {}: missing label in a labeled file",
                lineno + 1
            )));
        }
        labels.push(label);

        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| {
                PscaError::format(path, format!("line {}: bad number {f:?}", lineno + 1))
            })?;
            if !v.is_finite() {
                return Err(PscaError::Data(format!(
                    "{}: line {}: non-finite value {f:?}",
                    path.display(),
                    lineno + 1
                )));
            }
            columns.push(v);
        }
    }

    let width = width.ok_or_else(|| PscaError::format(path, "no data rows"))?;
    let d = width - 1;
    let features = Matrix::from_column_slice(d, labels.len(), &columns);
    Ok(CsvTable { features, labels })
}

/// Writes `label,f_1,...,f_d` rows with 17 significant digits and LF endings.
pub fn save_csv(path: &Path, features: &Matrix, labels: &[Option<usize>]) -> Result<()> {
    let file = File::create(path).map_err(|e| PscaError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_csv(&mut w, features, labels).map_err(|e| PscaError::io(path, e))?;
    w.flush().map_err(|e| PscaError::io(path, e))
}

pub fn write_csv<W: Write>(w: &mut W, features: &Matrix, labels: &[Option<usize>]) -> std::io::Result<()> {
    assert_eq!(features.ncols(), labels.len(), "one label per column");
    for (col, label) in features.column_iter().zip(labels) {
        match label {
            Some(l) => write!(w, "{l}")?,
            None => write!(w, "-1")?,
        }
        for v in col.iter() {
            write!(w, ",{v:.16e}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Random held-out fraction of the target domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.10,
            seed: 0,
        }
    }
}

/// Uniform (unstratified) split of `0..n_t` into sorted `(train, test)`
/// index sets with `|test| = floor(test_fraction * n_t)`.
pub fn split_target(n_t: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(PscaError::Config(format!(
            "test_fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }
    let n_test = (spec.test_fraction * n_t as f64).floor() as usize;
    if n_test == 0 {
        return Err(PscaError::Config(format!(
            "test_fraction {} of {n_t} target samples leaves an empty test set",
            spec.test_fraction
        )));
    }
    let mut idx: Vec<usize> = (0..n_t).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    idx.shuffle(&mut rng);
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Per-feature mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizeStats {
    pub mean: Vector,
    pub std: Vector,
}

/// Standardizes every feature (row) of `x`. With `stats = None` the
/// statistics are estimated from `x` (population std, zero std clamped to 1);
/// otherwise the supplied statistics are applied as-is.
pub fn standardize(x: &Matrix, stats: Option<&StandardizeStats>) -> (Matrix, StandardizeStats) {
    let stats = match stats {
        Some(s) => s.clone(),
        None => {
            let n = x.ncols().max(1) as f64;
            let mean = x.column_mean();
            let std = Vector::from_fn(x.nrows(), |i, _| {
                let var = x.row(i).iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            });
            StandardizeStats { mean, std }
        }
    };
    let out = Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        (x[(i, j)] - stats.mean[i]) / stats.std[i]
    });
    (out, stats)
}

/// Parameters of the synthetic two-domain generator.
///
/// Source class means sit at `class_separation / sqrt(2)` along `c` random
/// orthonormal directions (so every pair is exactly `class_separation` apart
/// when `c <= d`). Target means are the source means rotated by
/// `rotation_angle` in the first two coordinates and translated by
/// `shift_magnitude` along the all-ones direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub c: usize,
    pub d: usize,
    pub per_class_source: usize,
    pub per_class_target: usize,
    pub class_separation: f64,
    pub noise_sigma: f64,
    pub shift_magnitude: f64,
    pub rotation_angle: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            c: 5,
            d: 50,
            per_class_source: 50,
            per_class_target: 50,
            class_separation: 8.0,
            noise_sigma: 1.0,
            shift_magnitude: 2.0,
            rotation_angle: 30f64.to_radians(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(PscaError::Config(format!("synthetic d = {} < 2", self.d)));
        }
        if self.c < 2 {
            return Err(PscaError::Config(format!("synthetic c = {} < 2", self.c)));
        }
        if self.per_class_source == 0 || self.per_class_target == 0 {
            return Err(PscaError::Config("per-class sample counts must be positive".into()));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(PscaError::Config("class_separation must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(PscaError::Config("noise_sigma must be nonnegative".into()));
        }
        if !(self.shift_magnitude >= 0.0 && self.shift_magnitude.is_finite()) {
            return Err(PscaError::Config("shift_magnitude must be nonnegative".into()));
        }
        if !self.rotation_angle.is_finite() {
            return Err(PscaError::Config("rotation_angle must be finite".into()));
        }
        Ok(())
    }

    /// Source class means as a `d x c` matrix.
    pub fn source_means(&self) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        self.source_means_with(&mut rng)
    }

    fn source_means_with<R: Rng>(&self, rng: &mut R) -> Matrix {
        let scale = self.class_separation / std::f64::consts::SQRT_2;
        let dirs = if self.c <= self.d {
            linalg::random_row_orthonormal(self.c, self.d, rng).transpose()
        } else {
            let mut g = Matrix::from_fn(self.d, self.c, |_, _| rng.sample::<f64, _>(StandardNormal));
            for mut col in g.column_iter_mut() {
                let n = col.norm();
                col /= n;
            }
            g
        };
        dirs * scale
    }

    /// Maps source means to target means (rotation then translation).
    pub fn target_means(&self, source_means: &Matrix) -> Matrix {
        let (s, c) = self.rotation_angle.sin_cos();
        let shift = self.shift_magnitude / (self.d as f64).sqrt();
        let mut out = source_means.clone();
        for mut col in out.column_iter_mut() {
            let (a, b) = (col[0], col[1]);
            col[0] = c * a - s * b;
            col[1] = s * a + c * b;
            col.add_scalar_mut(shift);
        }
        out
    }
}

/// Deterministic two-domain Gaussian dataset; target labels are the
/// generating classes.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<DomainDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let src_means = spec.source_means_with(&mut rng);
    let tgt_means = spec.target_means(&src_means);

    let sample = |means: &Matrix, per_class: usize, rng: &mut ChaCha8Rng| {
        let mut labels: Vec<usize> = (0..spec.c)
            .flat_map(|j| std::iter::repeat_n(j, per_class))
            .collect();
        labels.shuffle(rng);
        let mut x = Matrix::zeros(spec.d, labels.len());
        for (col, &l) in labels.iter().enumerate() {
            for i in 0..spec.d {
                let z: f64 = rng.sample(StandardNormal);
                x[(i, col)] = means[(i, l)] + spec.noise_sigma * z;
            }
        }
        (x, labels)
    };
    let (xs, ys) = sample(&src_means, spec.per_class_source, &mut rng);
    let (xt, yt) = sample(&tgt_means, spec.per_class_target, &mut rng);
    DomainDataset::new(xs, ys, xt, Some(yt), spec.c)
}
