//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the crate's own numerics.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub type M = DMatrix<f64>;

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> M {
    M::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Gaussian elimination with partial pivoting on `a x = b`, columns of `b`
/// solved together.
pub fn gauss_solve(a: &M, b: &M) -> M {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)]).chain((0..m).map(|j| b[(i, j)])).collect())
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 1e-300, "singular system");
        for row in col + 1..n {
            let f = aug[row][col] / p;
            if f != 0.0 {
                for k in col..n + m {
                    aug[row][k] -= f * aug[col][k];
                }
            }
        }
    }
    let mut x = M::zeros(n, m);
    for j in 0..m {
        for i in (0..n).rev() {
            let mut s = aug[i][n + j];
            for k in i + 1..n {
                s -= aug[i][k] * x[(k, j)];
            }
            x[(i, j)] = s / aug[i][i];
        }
    }
    x
}

/// Exact Euclidean projection onto the simplex by enumerating every support
/// set: on a support `S` the KKT point is `v_S - theta` with a common shift.
pub fn brute_simplex(v: &[f64]) -> Vec<f64> {
    let c = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << c) {
        let idx: Vec<usize> = (0..c).filter(|&i| mask >> i & 1 == 1).collect();
        let sum: f64 = idx.iter().map(|&i| v[i]).sum();
        let theta = (sum - 1.0) / idx.len() as f64;
        let mut x = vec![0.0; c];
        let mut feasible = true;
        for &i in &idx {
            x[i] = v[i] - theta;
            if x[i] < -1e-15 {
                feasible = false;
            }
        }
        if !feasible {
            continue;
        }
        let cost: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, x));
        }
    }
    best.unwrap().1
}

/// Gram-Schmidt on Gaussian columns: a random `rows x cols` matrix with
/// orthonormal columns (`rows >= cols`).
pub fn random_orthonormal_columns<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> M {
    loop {
        let g = gaussian(rows, cols, rng);
        let mut q = M::zeros(rows, cols);
        let mut ok = true;
        for j in 0..cols {
            let mut v = g.column(j).clone_owned();
            for k in 0..j {
                let dot = q.column(k).dot(&v);
                v -= q.column(k) * dot;
            }
            let n = v.norm();
            if n < 1e-8 {
                ok = false;
                break;
            }
            q.set_column(j, &(v / n));
        }
        if ok {
            return q;
        }
    }
}

/// `sum_j a_j b_j` over all entries.
pub fn frobenius_dot(a: &M, b: &M) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Bit-by-bit Hamming distance between sign columns.
pub fn naive_hamming(a: &M, i: usize, b: &M, j: usize) -> u32 {
    (0..a.nrows()).filter(|&k| (a[(k, i)] > 0.0) != (b[(k, j)] > 0.0)).count() as u32
}

/// Average precision straight from the definition: precision at each
/// relevant position, recounted from scratch.
pub fn brute_ap(order: &[usize], relevant: &[bool]) -> f64 {
    let total = relevant.iter().filter(|&&r| r).count();
    let mut sum = 0.0;
    for pos in 0..order.len() {
        if relevant[order[pos]] {
            let hits = order[..=pos].iter().filter(|&&i| relevant[i]).count();
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    sum / total as f64
}

/// `sum_i sum_j y_ij |P^T x_i - o_j|^2` with explicit loops.
pub fn naive_fit(p: &M, o: &M, y: &M, x: &M) -> f64 {
    let (d, q) = p.shape();
    let mut total = 0.0;
    for i in 0..x.ncols() {
        let z: Vec<f64> = (0..q).map(|k| (0..d).map(|l| p[(l, k)] * x[(l, i)]).sum()).collect();
        for j in 0..o.ncols() {
            let dist: f64 = (0..q).map(|k| (z[k] - o[(k, j)]).powi(2)).sum();
            total += y[(i, j)] * dist;
        }
    }
    total
}

/// Squared distance between projected domain means, computed by loops.
pub fn naive_mean_gap(p: &M, x: &M, n_s: usize) -> f64 {
    let (d, q) = p.shape();
    let n_t = x.ncols() - n_s;
    let mut total = 0.0;
    for k in 0..q {
        let mut gap = 0.0;
        for i in 0..x.ncols() {
            let z: f64 = (0..d).map(|l| p[(l, k)] * x[(l, i)]).sum();
            gap += if i < n_s { z / n_s as f64 } else { -z / n_t as f64 };
        }
        total += gap * gap;
    }
    total
}

pub fn naive_l21(p: &M) -> f64 {
    (0..p.nrows())
        .map(|i| (0..p.ncols()).map(|j| p[(i, j)].powi(2)).sum::<f64>().sqrt())
        .sum()
}

/// `|W D - B|^2` by loops.
pub fn naive_fit_two(w: &M, d: &M, b: &M) -> f64 {
    let mut total = 0.0;
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            let v: f64 = (0..w.ncols()).map(|k| w[(i, k)] * d[(k, j)]).sum();
            total += (v - b[(i, j)]).powi(2);
        }
    }
    total
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
