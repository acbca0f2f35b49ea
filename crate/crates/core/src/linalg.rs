//! Small dense linear-algebra helpers shared by the optimisation stages.

use nalgebra::linalg::{Cholesky, SymmetricEigen, LU};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Matrix, PscaError, Result};

/// Sign with the `sgn(0) = +1` convention used for every binary code.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn sign_matrix(m: &Matrix) -> Matrix {
    m.map(sign)
}

/// Solves `M X = rhs` for a symmetric positive-definite `M`.
///
/// Falls back to LU when the Cholesky factorisation breaks down (for instance
/// when `M` is only semi-definite up to rounding).
pub fn solve_spd(m: &Matrix, rhs: &Matrix, what: &str) -> Result<Matrix> {
    if !m.is_square() || m.nrows() != rhs.nrows() {
        return Err(PscaError::Shape(format!(
            "{what}: system is {}x{}, right-hand side has {} rows",
            m.nrows(),
            m.ncols(),
            rhs.nrows()
        )));
    }
    if let Some(chol) = Cholesky::new(m.clone()) {
        let x = chol.solve(rhs);
        if x.iter().all(|v| v.is_finite()) {
            return Ok(x);
        }
    }
    let lu = LU::new(m.clone());
    match lu.solve(rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => Err(PscaError::Numerical(format!(
            "{what}: {}x{} system is singular",
            m.nrows(),
            m.ncols()
        ))),
    }
}

/// Orthogonal polar factor `U V^T` of the thin SVD `G = U S V^T`.
///
/// For a tall `G` the result has orthonormal columns, for a wide one it has
/// orthonormal rows. Among all such matrices it maximises `Tr(Q^T G)`.
/// Fails when `G` is numerically rank deficient, since the factor is then not
/// unique.
pub fn polar_factor(g: &Matrix, what: &str) -> Result<Matrix> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(PscaError::Numerical(format!("{what}: non-finite input")));
    }
    let svd = g.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min < 1e-10 * max {
        return Err(PscaError::DegeneratePrototypes(format!(
            "{what}: singular values span [{min:e}, {max:e}], matrix is rank deficient"
        )));
    }
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    Ok(u * v_t)
}

/// Seeded random matrix with orthonormal rows (`rows <= cols`).
pub fn random_row_orthonormal<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    assert!(rows <= cols, "cannot fit {rows} orthonormal rows in {cols} columns");
    let gauss = Matrix::from_fn(cols, rows, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = gauss.qr().q();
    q.transpose()
}

/// Top-`k` principal directions of the columns of `x` as a `d x k` matrix.
///
/// Each direction is signed so that its largest-magnitude entry is positive
/// (first such entry on ties), which makes the result deterministic.
pub fn principal_directions(x: &Matrix, k: usize) -> Matrix {
    let (d, n) = x.shape();
    assert!(k <= d, "requested {k} directions from {d}-dimensional data");
    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&centered * centered.transpose()) / (n.max(1) as f64);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut out = Matrix::zeros(d, k);
    for (j, &src) in order.iter().take(k).enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let mut pivot = 0;
        for i in 1..d {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        out.set_column(j, &col);
    }
    out
}

/// `n x c` one-hot indicator matrix.
pub fn one_hot(labels: &[usize], num_classes: usize) -> Matrix {
    let mut y = Matrix::zeros(labels.len(), num_classes);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    y
}

/// Squared Euclidean distances between the columns of `a` (`q x n`) and the
/// columns of `b` (`q x c`), returned as `n x c`.
pub fn squared_distances(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.nrows(), b.nrows());
    Matrix::from_fn(a.ncols(), b.ncols(), |i, j| {
        a.column(i)
            .iter()
            .zip(b.column(j).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    })
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Index of the smallest entry; the lowest index wins ties.
pub fn argmin(values: impl IntoIterator<Item = f64>) -> usize {
    argmax(values.into_iter().map(|v| -v))
}
