//! Target pseudo-labels from two complementary distance-softmax predictors:
//! nearest source class center (NCP) and nearest target cluster center (SP),
//! fused by an elementwise maximum.

use crate::linalg::{self, squared_distances};
use crate::{Matrix, PscaError, Result};

/// Per-class centers in the projected space (`q x c`) with member counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters {
    pub centers: Matrix,
    pub counts: Vec<usize>,
}

impl ClassCenters {
    pub fn num_classes(&self) -> usize {
        self.centers.ncols()
    }
}

/// Fused pseudo-label probabilities for each target sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelTable {
    /// `n_t x c`, entries in `[0, 1]`. Rows need not sum to one.
    pub probs: Matrix,
    pub hard_labels: Vec<usize>,
    /// Row `i` holds the probabilities of sample `i` in descending order.
    pub sorted_probs: Vec<Vec<f64>>,
    /// `sorted_probs[i][k] == probs[(i, sort_order[i][k])]`.
    pub sort_order: Vec<Vec<usize>>,
}

impl PseudoLabelTable {
    pub fn num_samples(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    /// `n_t x c` one-hot matrix of the hard labels.
    pub fn one_hot(&self) -> Matrix {
        linalg::one_hot(&self.hard_labels, self.num_classes())
    }
}

pub fn source_class_centers(
    projected_source: &Matrix,
    labels: &[usize],
    num_classes: usize,
) -> Result<ClassCenters> {
    if labels.len() != projected_source.ncols() {
        return Err(PscaError::Shape(format!(
            "{} labels for {} projected samples",
            labels.len(),
            projected_source.ncols()
        )));
    }
    let q = projected_source.nrows();
    let mut centers = Matrix::zeros(q, num_classes);
    let mut counts = vec![0usize; num_classes];
    for (col, &l) in projected_source.column_iter().zip(labels) {
        if l >= num_classes {
            return Err(PscaError::Label(format!("label {l} outside [0, {num_classes})")));
        }
        let mut c = centers.column_mut(l);
        c += col;
        counts[l] += 1;
    }
    for (j, &n) in counts.iter().enumerate() {
        if n == 0 {
            return Err(PscaError::Precondition(format!("class {j} has no source samples")));
        }
        centers.column_mut(j).unscale_mut(n as f64);
    }
    Ok(ClassCenters { centers, counts })
}

/// Source-seeded nearest-center refinement of target cluster centers.
///
/// Each round assigns every target column to its nearest center (lowest
/// index on ties) and moves each center to the mean of its members. A
/// center with no members keeps its previous position.
pub fn target_cluster_centers(
    projected_target: &Matrix,
    source_centers: &ClassCenters,
    rounds: usize,
) -> Result<ClassCenters> {
    if rounds == 0 {
        return Err(PscaError::Config("centroid rounds must be at least 1".into()));
    }
    if projected_target.nrows() != source_centers.centers.nrows() {
        return Err(PscaError::Shape("target and centers differ in dimension".into()));
    }
    let c = source_centers.num_classes();
    let mut centers = source_centers.centers.clone();
    let mut counts = vec![0usize; c];
    for _ in 0..rounds {
        let dist = squared_distances(projected_target, &centers);
        let mut sums = Matrix::zeros(centers.nrows(), c);
        counts = vec![0; c];
        for (i, col) in projected_target.column_iter().enumerate() {
            let k = linalg::argmin(dist.row(i).iter().copied());
            let mut s = sums.column_mut(k);
            s += col;
            counts[k] += 1;
        }
        for (j, &n) in counts.iter().enumerate() {
            if n > 0 {
                centers.set_column(j, &(sums.column(j) / n as f64));
            }
        }
    }
    Ok(ClassCenters { centers, counts })
}

/// Row-wise softmax of negative squared distances to `centers`.
fn distance_softmax(projected_target: &Matrix, centers: &ClassCenters) -> Result<Matrix> {
    if projected_target.nrows() != centers.centers.nrows() {
        return Err(PscaError::Shape("samples and centers differ in dimension".into()));
    }
    let mut p = squared_distances(projected_target, &centers.centers);
    for mut row in p.row_iter_mut() {
        let min = row.min();
        row.apply(|v| *v = (-(*v - min)).exp());
        let total = row.sum();
        row.unscale_mut(total);
    }
    Ok(p)
}

/// Nearest-class-prototype probabilities against source class centers.
pub fn ncp_probs(projected_target: &Matrix, source_centers: &ClassCenters) -> Result<Matrix> {
    distance_softmax(projected_target, source_centers)
}

/// Structured-prediction probabilities against target cluster centers.
pub fn sp_probs(projected_target: &Matrix, target_centers: &ClassCenters) -> Result<Matrix> {
    distance_softmax(projected_target, target_centers)
}

pub fn spl_fuse(p1: &Matrix, p2: &Matrix) -> Result<PseudoLabelTable> {
    if p1.shape() != p2.shape() {
        return Err(PscaError::Shape(format!(
            "probability tables {:?} and {:?}",
            p1.shape(),
            p2.shape()
        )));
    }
    let probs = p1.zip_map(p2, f64::max);
    Ok(table_from_probs(probs))
}

/// Builds the sorted views and hard labels for a probability table.
pub fn table_from_probs(probs: Matrix) -> PseudoLabelTable {
    let mut hard_labels = Vec::with_capacity(probs.nrows());
    let mut sorted_probs = Vec::with_capacity(probs.nrows());
    let mut sort_order = Vec::with_capacity(probs.nrows());
    for row in probs.row_iter() {
        let mut order: Vec<usize> = (0..row.len()).collect();
        // Stable sort keeps the lowest index first among equal probabilities.
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal));
        hard_labels.push(order[0]);
        sorted_probs.push(order.iter().map(|&j| row[j]).collect());
        sort_order.push(order);
    }
    PseudoLabelTable {
        probs,
        hard_labels,
        sorted_probs,
        sort_order,
    }
}

/// Full pseudo-labeling pass on already projected source/target samples.
pub fn pseudo_label(
    projected_source: &Matrix,
    source_labels: &[usize],
    projected_target: &Matrix,
    num_classes: usize,
    rounds: usize,
) -> Result<PseudoLabelTable> {
    let src = source_class_centers(projected_source, source_labels, num_classes)?;
    let tgt = target_cluster_centers(projected_target, &src, rounds)?;
    let p1 = ncp_probs(projected_target, &src)?;
    let p2 = sp_probs(projected_target, &tgt)?;
    spl_fuse(&p1, &p2)
}
