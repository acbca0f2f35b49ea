//! Prototype-based semantic consistency alignment.
//!
//! Alternates three updates until the objective
//!
//! ```text
//! sum_ij y~_ij |P^T x_i - o_j|^2 + lambda1 Tr(P^T X H X^T P) + lambda2 |P|_{2,1}
//! ```
//!
//! stalls: a reweighted closed-form solve for the projection `P`, a projected
//! gradient step on the soft target membership `R`, and an orthogonal
//! Procrustes step for the prototypes `O` (`O^T O = I_c`). `Y~ = [Y_s; R]`.
//!
//! The MMD matrix `H` is rank one (`H = v v^T`), and `A`, `S1`, `S2` are
//! diagonal, so the state keeps them as vectors.

use std::io::Write;

use crate::linalg::{self, squared_distances};
use crate::pseudo_label::PseudoLabelTable;
use crate::{DomainDataset, Matrix, PscaError, Result, Vector};

/// Entries of `R` carrying pseudo-label weight are kept at or above this.
pub const MEMBERSHIP_FLOOR: f64 = 1e-6;
const MAX_HALVINGS: usize = 20;

/// Hyperparameters for both stages and the out-of-sample encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// MMD weight.
    pub lambda1: f64,
    /// Row-sparsity weight on `P`.
    pub lambda2: f64,
    /// Coupling between the two quantizers.
    pub lambda3: f64,
    /// Membership exponent, must exceed 1.
    pub sigma: f64,
    /// Ridge weight of the encoder.
    pub beta: f64,
    /// Initial step of the membership update.
    pub eta: f64,
    /// Subspace dimension; `None` picks [`HyperParams::subspace_dim`]'s default.
    pub q: Option<usize>,
    /// Code length in bits.
    pub r: usize,
    pub t1: usize,
    pub t2: usize,
    /// Relative objective change that ends either loop early.
    pub tol: f64,
    pub eps: f64,
    pub seed: u64,
    /// Refinement rounds for the target cluster centers used in pseudo-labeling.
    pub centroid_rounds: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda1: 10.0,
            lambda2: 1.0,
            lambda3: 10.0,
            sigma: 2.0,
            beta: 0.1,
            eta: 0.01,
            q: None,
            r: 16,
            t1: 15,
            t2: 15,
            tol: 1e-5,
            eps: 1e-8,
            seed: 0,
            centroid_rounds: 5,
        }
    }
}

impl HyperParams {
    /// Subspace dimension for `c` classes in `d` dimensions.
    ///
    /// Defaults to `2c`, raised to `ceil(r / 2)` so the fused features
    /// (`2q` rows) can carry `r` bits, and clamped to `[c, d]`.
    pub fn subspace_dim(&self, c: usize, d: usize) -> usize {
        self.q
            .unwrap_or_else(|| (2 * c).max(self.r).clamp(c, d.max(c)))
    }

    pub fn validate(&self, c: usize, d: usize) -> Result<()> {
        let positive = [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("beta", self.beta),
            ("eta", self.eta),
            ("tol", self.tol),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PscaError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma > 1.0 && self.sigma.is_finite()) {
            return Err(PscaError::Config(format!("sigma must exceed 1, got {}", self.sigma)));
        }
        if self.r == 0 {
            return Err(PscaError::Config("code length r must be at least 1".into()));
        }
        if self.t1 == 0 || self.t2 == 0 {
            return Err(PscaError::Config("iteration limits must be at least 1".into()));
        }
        if self.centroid_rounds == 0 {
            return Err(PscaError::Config("centroid_rounds must be at least 1".into()));
        }
        let q = self.subspace_dim(c, d);
        if q < c {
            return Err(PscaError::Config(format!(
                "subspace dimension q = {q} is smaller than the number of classes {c}"
            )));
        }
        if q > d {
            return Err(PscaError::Config(format!(
                "subspace dimension q = {q} exceeds the feature dimension {d}"
            )));
        }
        Ok(())
    }
}

/// Objective value split into its parts; `mmd` and `sparsity` are unweighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub fit: f64,
    pub mmd: f64,
    pub sparsity: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOneState {
    /// `P`, `d x q`.
    pub projection: Matrix,
    /// `O`, `q x c`, orthonormal columns after the first pass.
    pub prototypes: Matrix,
    /// `R`, `n_t x c`, rows on the probability simplex.
    pub membership: Matrix,
    /// `Y~ = [Y_s; R]`, `n x c`.
    pub semantics: Matrix,
    /// `v` with `H = v v^T`.
    pub mmd_vector: Vector,
    /// Diagonal of `A`.
    pub sparsity_weights: Vector,
    /// Diagonal of `S1` (row sums of `Y~`).
    pub sample_degree: Vector,
    /// Diagonal of `S2` (column sums of `Y~`).
    pub class_degree: Vector,
    /// Adaptive pseudo-label weights from the latest membership update.
    pub alpha: Vector,
    /// Objective after each completed pass.
    pub trace: Vec<ObjectiveTerms>,
}

impl StageOneState {
    pub fn num_source(&self) -> usize {
        self.semantics.nrows() - self.membership.nrows()
    }

    pub fn objective(&self, x: &Matrix, hp: &HyperParams) -> ObjectiveTerms {
        stage_one_objective(&self.projection, &self.prototypes, &self.semantics, x, self.num_source(), hp)
    }
}

/// `v = [1/n_s ...; -1/n_t ...]`, the factor of the MMD matrix.
pub fn mmd_vector(n_s: usize, n_t: usize) -> Vector {
    Vector::from_fn(n_s + n_t, |i, _| {
        if i < n_s {
            1.0 / n_s as f64
        } else {
            -1.0 / n_t as f64
        }
    })
}

/// Dense `n x n` MMD matrix `H`.
pub fn mmd_matrix(n_s: usize, n_t: usize) -> Matrix {
    let v = mmd_vector(n_s, n_t);
    &v * v.transpose()
}

/// `Tr(P^T X H X^T P)`.
pub fn mmd_term(p: &Matrix, x: &Matrix, h: &Matrix) -> f64 {
    let z = p.transpose() * x;
    (&z * h * z.transpose()).trace()
}

/// Squared distance between the projected domain means.
pub fn projected_mean_gap(p: &Matrix, x_source: &Matrix, x_target: &Matrix) -> f64 {
    let diff = x_source.column_mean() - x_target.column_mean();
    (p.transpose() * diff).norm_squared()
}

/// Diagonal of the `l2,1` majorizer, `a_ii = 1 / (2 |p_i| + eps)`.
pub fn subgradient_diagonal(p: &Matrix, eps: f64) -> Vector {
    Vector::from_fn(p.nrows(), |i, _| 1.0 / (2.0 * p.row(i).norm() + eps))
}

/// Diagonals of `S1` (row sums of `Y~`, length `n`) and `S2` (column sums,
/// length `c`).
pub fn degree_diagonals(semantics: &Matrix) -> (Vector, Vector) {
    let s1 = Vector::from_iterator(semantics.nrows(), semantics.row_iter().map(|r| r.sum()));
    let s2 = Vector::from_iterator(semantics.ncols(), semantics.column_iter().map(|c| c.sum()));
    (s1, s2)
}

/// `sum_i |p_i|_2`.
pub fn l21_norm(p: &Matrix) -> f64 {
    p.row_iter().map(|r| r.norm()).sum()
}

/// Linear system `(lambda1 X H X^T + X S1 X^T + lambda2 A) P = X Y~ O^T`.
#[derive(Debug, Clone)]
pub struct ProjectionSystem {
    pub lhs: Matrix,
    pub rhs: Matrix,
}

impl ProjectionSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        x: &Matrix,
        semantics: &Matrix,
        prototypes: &Matrix,
        mmd_vector: &Vector,
        sparsity_weights: &Vector,
        sample_degree: &Vector,
        lambda1: f64,
        lambda2: f64,
    ) -> ProjectionSystem {
        let xv = x * mmd_vector;
        let mut scaled = x.clone();
        for (mut col, &s) in scaled.column_iter_mut().zip(sample_degree.iter()) {
            col *= s;
        }
        let mut lhs = &scaled * x.transpose();
        lhs += &xv * xv.transpose() * lambda1;
        for (i, &a) in sparsity_weights.iter().enumerate() {
            lhs[(i, i)] += lambda2 * a;
        }
        // Symmetrize away rounding so the Cholesky path is taken.
        let lhs = (&lhs + lhs.transpose()) * 0.5;
        let rhs = x * (semantics * prototypes.transpose());
        ProjectionSystem { lhs, rhs }
    }

    pub fn solve(&self) -> Result<Matrix> {
        linalg::solve_spd(&self.lhs, &self.rhs, "projection update")
    }

    /// `|lhs P - rhs|_F / |rhs|_F` (absolute when `rhs = 0`).
    pub fn relative_residual(&self, p: &Matrix) -> f64 {
        let r = (&self.lhs * p - &self.rhs).norm();
        let scale = self.rhs.norm();
        if scale > 0.0 {
            r / scale
        } else {
            r
        }
    }
}

/// Closed-form projection update with `A`, `S1` taken from `state`.
pub fn update_projection(state: &StageOneState, x: &Matrix, hp: &HyperParams) -> Result<Matrix> {
    ProjectionSystem::assemble(
        x,
        &state.semantics,
        &state.prototypes,
        &state.mmd_vector,
        &state.sparsity_weights,
        &state.sample_degree,
        hp.lambda1,
        hp.lambda2,
    )
    .solve()
}

/// Per-sample pseudo-label weight.
///
/// When the nearest prototype agrees with the predicted class, the weight is
/// the probability margin over the distance margin between the two best
/// candidates; otherwise the top probability discounted by the disagreement
/// `|pi_geo - pi_sem|`.
pub fn alpha_weights(table: &PseudoLabelTable, distances: &Matrix, eps: f64) -> Vector {
    assert_eq!(table.probs.shape(), distances.shape());
    Vector::from_fn(distances.nrows(), |i, _| {
        let row = distances.row(i);
        let k_geo = linalg::argmin(row.iter().copied());
        let k_sem = table.hard_labels[i];
        let sorted = &table.sorted_probs[i];
        if k_geo == k_sem {
            if sorted.len() < 2 {
                return 0.0;
            }
            let mut d: Vec<f64> = row.iter().copied().collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            (sorted[0] - sorted[1]) / (d[1] - d[0] + eps)
        } else {
            let gap = (table.probs[(i, k_geo)] - table.probs[(i, k_sem)]).abs();
            sorted[0] * (1.0 - gap)
        }
    })
}

/// Per-row membership objective `sum_j r_j^sigma d_j - psi_j log2 r_j`.
pub fn membership_row_objective(r: &[f64], d: &[f64], psi: &[f64], sigma: f64) -> f64 {
    r.iter()
        .zip(d)
        .zip(psi)
        .map(|((&r, &d), &psi)| {
            let geo = r.powf(sigma) * d;
            if psi > 0.0 {
                geo - psi * r.log2()
            } else {
                geo
            }
        })
        .sum()
}

/// Partial derivative of the row objective with respect to `r`.
pub fn membership_gradient(r: f64, d: f64, psi: f64, sigma: f64) -> f64 {
    let geo = sigma * r.powf(sigma - 1.0) * d;
    if psi > 0.0 {
        geo - psi / (r * std::f64::consts::LN_2)
    } else {
        geo
    }
}

/// Euclidean projection onto `{r >= 0, sum r = 1}` (sort and threshold).
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn apply_floor(row: &mut [f64], psi: &[f64]) {
    let mut changed = false;
    for (r, &p) in row.iter_mut().zip(psi) {
        if p > 0.0 && *r < MEMBERSHIP_FLOOR {
            *r = MEMBERSHIP_FLOOR;
            changed = true;
        }
    }
    if changed {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|r| *r /= s);
    }
}

/// One projected-gradient step on a single membership row with backtracking.
///
/// The step starts at `eta` and halves until the row objective does not
/// increase; after the last halving the old row is kept.
pub fn update_membership_row(r: &[f64], d: &[f64], psi: &[f64], sigma: f64, eta: f64) -> Vec<f64> {
    membership_step(r, d, psi, sigma, eta, false)
}

/// Like [`update_membership_row`], but a step is also rejected when it raises
/// the row's share `sum_j r_j d_j` of the stage-one fit term.
pub fn update_membership_row_guarded(r: &[f64], d: &[f64], psi: &[f64], sigma: f64, eta: f64) -> Vec<f64> {
    membership_step(r, d, psi, sigma, eta, true)
}

fn membership_step(r: &[f64], d: &[f64], psi: &[f64], sigma: f64, eta: f64, guard_fit: bool) -> Vec<f64> {
    let before = membership_row_objective(r, d, psi, sigma);
    let fit = |row: &[f64]| -> f64 { row.iter().zip(d).map(|(r, d)| r * d).sum() };
    let fit_before = fit(r);
    let grad: Vec<f64> = r
        .iter()
        .zip(d)
        .zip(psi)
        .map(|((&r, &d), &p)| membership_gradient(r, d, p, sigma))
        .collect();
    let mut step = eta;
    for _ in 0..=MAX_HALVINGS {
        let moved: Vec<f64> = r.iter().zip(&grad).map(|(r, g)| r - step * g).collect();
        let mut cand = simplex_project(&moved);
        apply_floor(&mut cand, psi);
        if membership_row_objective(&cand, d, psi, sigma) <= before && (!guard_fit || fit(&cand) <= fit_before) {
            return cand;
        }
        step *= 0.5;
    }
    r.to_vec()
}

type RowStep = fn(&[f64], &[f64], &[f64], f64, f64) -> Vec<f64>;

fn membership_rows(
    membership: &Matrix,
    distances: &Matrix,
    hard_labels: &[usize],
    alpha: &Vector,
    hp: &HyperParams,
    row_step: RowStep,
) -> Matrix {
    let (n_t, c) = membership.shape();
    let mut out = Matrix::zeros(n_t, c);
    let mut psi = vec![0.0; c];
    for i in 0..n_t {
        psi.iter_mut().for_each(|p| *p = 0.0);
        psi[hard_labels[i]] = alpha[i];
        let r: Vec<f64> = membership.row(i).iter().copied().collect();
        let d: Vec<f64> = distances.row(i).iter().copied().collect();
        let updated = row_step(&r, &d, &psi, hp.sigma, hp.eta);
        for (j, v) in updated.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Membership update for every target row, with `psi = alpha (.) Y^_t`.
pub fn update_membership(
    membership: &Matrix,
    distances: &Matrix,
    hard_labels: &[usize],
    alpha: &Vector,
    hp: &HyperParams,
) -> Matrix {
    membership_rows(membership, distances, hard_labels, alpha, hp, update_membership_row)
}

/// Membership update used by the stage-one loop.
///
/// The plain update is kept unless it raises the total fit term
/// `sum_ij r_ij d_ij`; in that case every row takes the guarded step instead,
/// so the stage-one objective cannot increase through `R`.
pub fn update_membership_descending(
    membership: &Matrix,
    distances: &Matrix,
    hard_labels: &[usize],
    alpha: &Vector,
    hp: &HyperParams,
) -> Matrix {
    let plain = update_membership(membership, distances, hard_labels, alpha, hp);
    if plain.component_mul(distances).sum() <= membership.component_mul(distances).sum() {
        plain
    } else {
        membership_rows(membership, distances, hard_labels, alpha, hp, update_membership_row_guarded)
    }
}

/// Weighted class centroids of the projected samples (`q x c`).
pub fn init_prototypes(projected: &Matrix, semantics: &Matrix) -> Result<Matrix> {
    let weights = semantics.row_sum();
    if let Some(j) = weights.iter().position(|&w| !(w > 0.0)) {
        return Err(PscaError::Precondition(format!("class {j} has zero total membership")));
    }
    let mut o = projected * semantics;
    for (mut col, &w) in o.column_iter_mut().zip(weights.iter()) {
        col /= w;
    }
    Ok(o)
}

/// Orthonormal prototypes: polar factor of `P^T X Y~ S2^{-1}`.
pub fn update_prototypes(p: &Matrix, x: &Matrix, semantics: &Matrix, class_degree: &Vector) -> Result<Matrix> {
    if let Some(j) = class_degree.iter().position(|&s| !(s > 0.0)) {
        return Err(PscaError::DegeneratePrototypes(format!("class {j} has zero degree")));
    }
    let mut g = p.transpose() * (x * semantics);
    for (mut col, &s) in g.column_iter_mut().zip(class_degree.iter()) {
        col /= s;
    }
    linalg::polar_factor(&g, "prototype update")
}

pub fn stage_one_objective(
    p: &Matrix,
    prototypes: &Matrix,
    semantics: &Matrix,
    x: &Matrix,
    n_s: usize,
    hp: &HyperParams,
) -> ObjectiveTerms {
    let z = p.transpose() * x;
    let fit = squared_distances(&z, prototypes).component_mul(semantics).sum();
    let n_t = x.ncols() - n_s;
    let mmd = (&z * mmd_vector(n_s, n_t)).norm_squared();
    let sparsity = l21_norm(p);
    ObjectiveTerms {
        fit,
        mmd,
        sparsity,
        total: fit + hp.lambda1 * mmd + hp.lambda2 * sparsity,
    }
}

/// `[Y_s; R]`.
pub fn unified_semantics(source_onehot: &Matrix, membership: &Matrix) -> Matrix {
    let (n_s, c) = source_onehot.shape();
    let n_t = membership.nrows();
    let mut y = Matrix::zeros(n_s + n_t, c);
    y.rows_mut(0, n_s).copy_from(source_onehot);
    y.rows_mut(n_s, n_t).copy_from(membership);
    y
}

/// Starting projection: top-`q` principal directions of `X`.
pub fn initial_projection(x: &Matrix, q: usize) -> Matrix {
    linalg::principal_directions(x, q)
}

pub fn run_stage_one(ds: &DomainDataset, table: &PseudoLabelTable, hp: &HyperParams) -> Result<StageOneState> {
    let q = hp.subspace_dim(ds.num_classes, ds.feature_dim());
    let p0 = initial_projection(&ds.combined_features(), q);
    run_stage_one_from(ds, table, p0, hp, |_| {})
}

/// Stage-one loop from a given initial projection.
///
/// `observer` sees the state after every full pass (P, then R, then O).
pub fn run_stage_one_from(
    ds: &DomainDataset,
    table: &PseudoLabelTable,
    initial_projection: Matrix,
    hp: &HyperParams,
    mut observer: impl FnMut(&StageOneState),
) -> Result<StageOneState> {
    let c = ds.num_classes;
    hp.validate(c, ds.feature_dim())?;
    if table.num_samples() != ds.num_target() || table.num_classes() != c {
        return Err(PscaError::Shape(format!(
            "pseudo-label table is {}x{}, dataset has {} target samples and {c} classes",
            table.num_samples(),
            table.num_classes(),
            ds.num_target()
        )));
    }
    let x = ds.combined_features();
    let (n_s, n_t) = (ds.num_source(), ds.num_target());

    let source_onehot = linalg::one_hot(&ds.source_labels, c);
    let membership = table.one_hot();
    let semantics = unified_semantics(&source_onehot, &membership);
    let prototypes = init_prototypes(&(initial_projection.transpose() * &x), &semantics)?;
    let (sample_degree, class_degree) = degree_diagonals(&semantics);

    let mut state = StageOneState {
        sparsity_weights: subgradient_diagonal(&initial_projection, hp.eps),
        projection: initial_projection,
        prototypes,
        membership,
        semantics,
        mmd_vector: mmd_vector(n_s, n_t),
        sample_degree,
        class_degree,
        alpha: Vector::zeros(n_t),
        trace: Vec::with_capacity(hp.t1),
    };

    for pass in 0..hp.t1 {
        // A and S1 come from the previous iterate.
        state.sparsity_weights = subgradient_diagonal(&state.projection, hp.eps);
        let (s1, _) = degree_diagonals(&state.semantics);
        state.sample_degree = s1;
        state.projection = update_projection(&state, &x, hp)?;

        let projected_target = state.projection.transpose() * &ds.target_features;
        let distances = squared_distances(&projected_target, &state.prototypes);
        state.alpha = alpha_weights(table, &distances, hp.eps);
        // The first pass leaves the one-hot, non-orthonormal start; descent is
        // enforced between recorded passes.
        let update = if pass == 0 { update_membership } else { update_membership_descending };
        state.membership = update(&state.membership, &distances, &table.hard_labels, &state.alpha, hp);
        state.semantics = unified_semantics(&source_onehot, &state.membership);

        let (s1, s2) = degree_diagonals(&state.semantics);
        state.sample_degree = s1;
        state.class_degree = s2;
        state.prototypes = update_prototypes(&state.projection, &x, &state.semantics, &state.class_degree)?;

        let terms = state.objective(&x, hp);
        if !terms.total.is_finite() {
            return Err(PscaError::Numerical("stage-one objective is not finite".into()));
        }
        let prev = state.trace.last().map(|t| t.total);
        state.trace.push(terms);
        observer(&state);
        if let Some(prev) = prev {
            if relative_change(prev, terms.total) < hp.tol {
                break;
            }
        }
    }
    Ok(state)
}

pub(crate) fn relative_change(prev: f64, cur: f64) -> f64 {
    (prev - cur).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

/// Writes `iter,objective,mmd_term,fit_term,sparsity_term` rows (1-based).
pub fn write_trace_csv<W: Write>(w: &mut W, trace: &[ObjectiveTerms]) -> std::io::Result<()> {
    writeln!(w, "iter,objective,mmd_term,fit_term,sparsity_term")?;
    for (i, t) in trace.iter().enumerate() {
        writeln!(w, "{},{:.16e},{:.16e},{:.16e},{:.16e}", i + 1, t.total, t.mmd, t.fit, t.sparsity)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudo_label::table_from_probs;
    use proptest::prelude::*;

    #[test]
    fn mmd_matrix_small_cases() {
        assert_eq!(mmd_matrix(1, 1), Matrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        let h = mmd_matrix(2, 1);
        let expect = Matrix::from_row_slice(
            3,
            3,
            &[0.25, 0.25, -0.5, 0.25, 0.25, -0.5, -0.5, -0.5, 1.0],
        );
        assert!((h - expect).amax() < 1e-15);
    }

    #[test]
    fn mmd_term_examples() {
        let x = Matrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let p = Matrix::from_element(1, 1, 1.0);
        assert!((mmd_term(&p, &x, &mmd_matrix(1, 1)) - 4.0).abs() < 1e-12);

        let x = Matrix::from_row_slice(2, 4, &[1.0, 3.0, 2.0, 2.0, 0.0, 4.0, 1.0, 3.0]);
        let p = Matrix::from_row_slice(2, 1, &[0.7, -1.3]);
        assert!(mmd_term(&p, &x, &mmd_matrix(2, 2)).abs() < 1e-12);
    }

    #[test]
    fn subgradient_examples() {
        let p = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]);
        let a = subgradient_diagonal(&p, 1e-8);
        assert_eq!(a[0], 1e8);
        assert!((a[1] - 1.0 / (10.0 + 1e-8)).abs() < 1e-15);

        let eps = 1e-3;
        let p = Matrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.0, -3.0, 1.5]);
        let a = subgradient_diagonal(&p, eps);
        let lhs = (p.transpose() * Matrix::from_diagonal(&a) * &p).trace();
        let rhs: f64 = p
            .row_iter()
            .map(|r| r.norm_squared() / (2.0 * r.norm() + eps))
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn degree_examples() {
        let y = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 0.7]);
        let (s1, s2) = degree_diagonals(&y);
        assert_eq!(s1.as_slice(), &[1.0, 1.0]);
        assert!((s2[0] - 1.3).abs() < 1e-15 && (s2[1] - 0.7).abs() < 1e-15);

        let onehot = linalg::one_hot(&[2, 0, 1, 1], 3);
        let (s1, _) = degree_diagonals(&onehot);
        assert!(s1.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_data_gives_zero_projection() {
        let x = Matrix::zeros(3, 4);
        let y = linalg::one_hot(&[0, 1, 0, 1], 2);
        let o = Matrix::identity(2, 2);
        let sys = ProjectionSystem::assemble(
            &x,
            &y,
            &o,
            &mmd_vector(2, 2),
            &Vector::from_element(3, 1.0),
            &Vector::from_element(4, 1.0),
            10.0,
            1.0,
        );
        assert_eq!(sys.solve().unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn singular_projection_system_is_reported() {
        let x = Matrix::zeros(2, 3);
        let y = linalg::one_hot(&[0, 1, 0], 2);
        let sys = ProjectionSystem::assemble(
            &x,
            &y,
            &Matrix::identity(2, 2),
            &mmd_vector(2, 1),
            &Vector::from_element(2, 1.0),
            &Vector::from_element(3, 1.0),
            1.0,
            0.0,
        );
        assert!(matches!(sys.solve(), Err(PscaError::Numerical(_))));
    }

    fn table(rows: &[&[f64]]) -> PseudoLabelTable {
        let c = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        table_from_probs(Matrix::from_row_slice(rows.len(), c, &flat))
    }

    #[test]
    fn alpha_consistent_branch() {
        let t = table(&[&[0.7, 0.6]]);
        let d = Matrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let a = alpha_weights(&t, &d, 0.0);
        assert!((a[0] - 0.1).abs() < 1e-12);

        let t = table(&[&[0.5, 0.5]]);
        assert_eq!(alpha_weights(&t, &d, 1e-8)[0], 0.0);
    }

    #[test]
    fn alpha_conflict_branch() {
        // k_sem = 0 (0.7), k_geo = 1 (0.6).
        let t = table(&[&[0.7, 0.6]]);
        let d = Matrix::from_row_slice(1, 2, &[2.0, 1.0]);
        let a = alpha_weights(&t, &d, 1e-8);
        assert!((a[0] - 0.63).abs() < 1e-12);
    }

    #[test]
    fn gradient_example() {
        let g = membership_gradient(0.5, 1.0, 1.0, 2.0);
        let expect = 1.0 - 1.0 / (0.5 * std::f64::consts::LN_2);
        assert!((g - expect).abs() < 1e-15);
        assert!((g + 1.8854).abs() < 1e-4);
    }

    #[test]
    fn uniform_row_is_fixed_point_without_pseudo_labels() {
        let r = vec![0.25; 4];
        let out = update_membership_row(&r, &[1.5; 4], &[0.0; 4], 2.0, 0.01);
        for v in out {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn simplex_examples() {
        let p = simplex_project(&[0.5, 0.7]);
        assert!((p[0] - 0.4).abs() < 1e-15 && (p[1] - 0.6).abs() < 1e-15);
        let p = simplex_project(&[0.2, 0.2, 0.2]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(simplex_project(&[1.5, -0.2]), vec![1.0, 0.0]);
    }

    #[test]
    fn prototype_init_examples() {
        let z = Matrix::from_row_slice(1, 3, &[1.0, 3.0, 10.0]);
        let y = linalg::one_hot(&[0, 0, 1], 2);
        let o = init_prototypes(&z, &y).unwrap();
        assert_eq!(o[(0, 0)], 2.0);

        let z = Matrix::from_row_slice(1, 2, &[0.0, 4.0]);
        let y = Matrix::from_row_slice(2, 1, &[0.25, 0.75]);
        assert_eq!(init_prototypes(&z, &y).unwrap()[(0, 0)], 3.0);

        let z = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 6.0, 0.0, 3.0, 3.0]);
        let y = Matrix::from_element(3, 2, 0.5);
        let o = init_prototypes(&z, &y).unwrap();
        let mean = z.column_mean();
        assert!((o.column(0) - &mean).amax() < 1e-15);
        assert!((o.column(1) - &mean).amax() < 1e-15);

        let y = linalg::one_hot(&[0, 0, 0], 2);
        assert!(init_prototypes(&z, &y).is_err());
    }

    #[test]
    fn prototype_update_polar_identities() {
        // Orthonormal G: with P = I, X = G, Y~ = I, S2 = 1 the product is G.
        let g = Matrix::from_row_slice(3, 2, &[0.6, 0.0, 0.8, 0.0, 0.0, 1.0]);
        let o = update_prototypes(&Matrix::identity(3, 3), &g, &Matrix::identity(2, 2), &Vector::from_element(2, 1.0)).unwrap();
        assert!((o - &g).amax() < 1e-10);

        let diag = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let o = update_prototypes(&Matrix::identity(2, 2), &diag, &Matrix::identity(2, 2), &Vector::from_element(2, 1.0)).unwrap();
        assert!((o - Matrix::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn objective_special_cases() {
        let hp = HyperParams { lambda1: 0.0, lambda2: 0.0, ..HyperParams::default() };
        let y = linalg::one_hot(&[0, 1, 0], 2);
        let o = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        // P^T x_i equals its prototype for every i.
        let p = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]);
        let x = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert!(stage_one_objective(&p, &o, &y, &x, 2, &hp).total.abs() < 1e-15);

        let p0 = Matrix::zeros(2, 2);
        let hp = HyperParams::default();
        let t = stage_one_objective(&p0, &o, &y, &x, 2, &hp);
        let expect: f64 = 2.0 * 0.25 + 1.0;
        assert!((t.total - expect).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mmd_rows_sum_to_zero(ns in 1usize..30, nt in 1usize..30) {
            let h = mmd_matrix(ns, nt);
            for row in h.row_iter() {
                prop_assert!(row.sum().abs() < 1e-14);
            }
        }

        #[test]
        fn mmd_term_nonnegative(vals in proptest::collection::vec(-10.0f64..10.0, 24), pv in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let x = Matrix::from_column_slice(3, 8, &vals);
            let p = Matrix::from_column_slice(3, 2, &pv);
            prop_assert!(mmd_term(&p, &x, &mmd_matrix(5, 3)) >= -1e-12);
        }

        #[test]
        fn simplex_output_on_simplex(v in proptest::collection::vec(-5.0f64..5.0, 1..8)) {
            let p = simplex_project(&v);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn membership_row_step_descends(
            raw in proptest::collection::vec(0.01f64..1.0, 2..7),
            dist in proptest::collection::vec(0.0f64..5.0, 7),
            alpha in 0.0f64..3.0,
            label in 0usize..7,
            sigma in 1.1f64..3.0,
        ) {
            let c = raw.len();
            let total: f64 = raw.iter().sum();
            let r: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let mut psi = vec![0.0; c];
            psi[label % c] = alpha;
            let d = &dist[..c];
            let out = update_membership_row(&r, d, &psi, sigma, 0.01);
            prop_assert!(out.iter().all(|&v| v >= 0.0));
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            let before = membership_row_objective(&r, d, &psi, sigma);
            let after = membership_row_objective(&out, d, &psi, sigma);
            prop_assert!(after <= before + 1e-12);

            let guarded = update_membership_row_guarded(&r, d, &psi, sigma, 0.1);
            let fit = |row: &[f64]| row.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!(fit(&guarded) <= fit(&r));
            prop_assert!(membership_row_objective(&guarded, d, &psi, sigma) <= before + 1e-12);
        }
    }
}
