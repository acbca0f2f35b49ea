//! Semantically reconstructed features: each sample is replaced by its
//! membership-weighted prototype combination and stacked on top of its
//! projection `P^T x`, giving `C = 2q` rows per column.

use crate::{Matrix, PscaError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedFeatures {
    /// `C x n_s`.
    pub source: Matrix,
    /// `C x n_t`.
    pub target: Matrix,
    /// Subspace dimension `q`; `C = 2q`.
    pub q: usize,
}

impl ReconstructedFeatures {
    pub fn fused_dim(&self) -> usize {
        2 * self.q
    }

    /// Reconstructed-semantics half of a block.
    pub fn semantic_half(block: &Matrix, q: usize) -> Matrix {
        block.rows(0, q).into_owned()
    }

    /// Projected-geometry half of a block.
    pub fn geometric_half(block: &Matrix, q: usize) -> Matrix {
        block.rows(q, q).into_owned()
    }
}

/// `X~_t = O R^T`: column `i` is `sum_m r_im o_m`.
pub fn reconstruct_target(membership: &Matrix, prototypes: &Matrix) -> Matrix {
    prototypes * membership.transpose()
}

/// Column `i` is the prototype of the source label.
pub fn reconstruct_source(labels: &[usize], prototypes: &Matrix) -> Matrix {
    let q = prototypes.nrows();
    let mut out = Matrix::zeros(q, labels.len());
    for (i, &l) in labels.iter().enumerate() {
        out.set_column(i, &prototypes.column(l));
    }
    out
}

fn stack(top: &Matrix, bottom: &Matrix) -> Matrix {
    let q = top.nrows();
    let mut d = Matrix::zeros(2 * q, top.ncols());
    d.rows_mut(0, q).copy_from(top);
    d.rows_mut(q, q).copy_from(bottom);
    d
}

/// Stacks `[X~; P^T X]` for both domains.
pub fn assemble(
    recon_source: &Matrix,
    recon_target: &Matrix,
    projection: &Matrix,
    x_source: &Matrix,
    x_target: &Matrix,
) -> Result<ReconstructedFeatures> {
    let q = projection.ncols();
    let shape_ok = recon_source.nrows() == q
        && recon_target.nrows() == q
        && recon_source.ncols() == x_source.ncols()
        && recon_target.ncols() == x_target.ncols()
        && projection.nrows() == x_source.nrows()
        && projection.nrows() == x_target.nrows();
    if !shape_ok {
        return Err(PscaError::Shape(format!(
            "cannot fuse reconstructions {:?}/{:?} with projection {:?} and data {:?}/{:?}",
            recon_source.shape(),
            recon_target.shape(),
            projection.shape(),
            x_source.shape(),
            x_target.shape()
        )));
    }
    let pt = projection.transpose();
    Ok(ReconstructedFeatures {
        source: stack(recon_source, &(&pt * x_source)),
        target: stack(recon_target, &(&pt * x_target)),
        q,
    })
}
