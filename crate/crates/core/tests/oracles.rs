mod support;

use psca_core::encoder::LinearEncoder;
use psca_core::linalg::one_hot;
use psca_core::retrieval::{average_precision, hamming_rank, PackedCodes};
use psca_core::stage_one::{
    self, degree_diagonals, mmd_matrix, mmd_term, mmd_vector, projected_mean_gap, simplex_project,
    subgradient_diagonal, update_prototypes, HyperParams, ProjectionSystem,
};
use psca_core::stage_two::{quantizer_target, stage_two_objective, update_codes, update_quantizer, HashCodes, QuantizerPair};
use psca_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::*;

fn random_semantics<R: Rng>(n_s: usize, n_t: usize, c: usize, rng: &mut R) -> Matrix {
    let labels: Vec<usize> = (0..n_s).map(|i| i % c).collect();
    let mut y = Matrix::zeros(n_s + n_t, c);
    y.rows_mut(0, n_s).copy_from(&one_hot(&labels, c));
    for i in n_s..n_s + n_t {
        let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        for j in 0..c {
            y[(i, j)] = raw[j] / s;
        }
    }
    y
}

#[test]
fn mmd_trace_form_matches_mean_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let (d, q, n_s, n_t) = (50, 8, 40, 30);
        let x = gaussian(d, n_s + n_t, &mut rng);
        let p = gaussian(d, q, &mut rng);
        let h = mmd_matrix(n_s, n_t);
        let trace = mmd_term(&p, &x, &h);
        let oracle = naive_mean_gap(&p, &x, n_s);
        assert!(rel_err(trace, oracle) < 1e-10, "{trace} vs {oracle}");
        let direct = projected_mean_gap(&p, &x.columns(0, n_s).into_owned(), &x.columns(n_s, n_t).into_owned());
        assert!(rel_err(direct, oracle) < 1e-10);
    }
}

#[test]
fn trace_expansion_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let (d, q, c, n_s, n_t) = (50, 10, 4, 30, 25);
        let x = gaussian(d, n_s + n_t, &mut rng);
        let p = gaussian(d, q, &mut rng);
        let o = gaussian(q, c, &mut rng);
        let y = random_semantics(n_s, n_t, c, &mut rng);
        let lhs = naive_fit(&p, &o, &y, &x);
        let (s1, s2) = degree_diagonals(&y);
        let z = p.transpose() * &x;
        let rhs = (&z * Matrix::from_diagonal(&s1) * z.transpose()).trace()
            + (&o * Matrix::from_diagonal(&s2) * o.transpose()).trace()
            - 2.0 * (&z * &y * o.transpose()).trace();
        assert!(rel_err(rhs, lhs) < 1e-9, "{rhs} vs {lhs}");
    }
}

#[test]
fn projection_update_matches_independent_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (d, q, c, n_s, n_t) in [(5, 5, 2, 4, 3), (50, 10, 4, 40, 35), (50, 8, 5, 60, 45)] {
        let n = n_s + n_t;
        let x = gaussian(d, n, &mut rng);
        let p_prev = gaussian(d, q, &mut rng);
        let o = gaussian(q, c, &mut rng);
        let y = random_semantics(n_s, n_t, c, &mut rng);
        let (l1, l2, eps) = (10.0, 1.0, 1e-8);

        // Dense assembly from the definitions.
        let h = {
            let mut h = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let vi = if i < n_s { 1.0 / n_s as f64 } else { -1.0 / n_t as f64 };
                    let vj = if j < n_s { 1.0 / n_s as f64 } else { -1.0 / n_t as f64 };
                    h[(i, j)] = vi * vj;
                }
            }
            h
        };
        let s1 = Matrix::from_fn(n, n, |i, j| if i == j { y.row(i).sum() } else { 0.0 });
        let a = Matrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0 / (2.0 * p_prev.row(i).norm() + eps)
            } else {
                0.0
            }
        });
        let lhs = &x * &h * x.transpose() * l1 + &x * &s1 * x.transpose() + a * l2;
        let rhs = &x * &y * o.transpose();
        let oracle = gauss_solve(&lhs, &rhs);

        let (sd, _) = degree_diagonals(&y);
        let system = ProjectionSystem::assemble(
            &x,
            &y,
            &o,
            &mmd_vector(n_s, n_t),
            &subgradient_diagonal(&p_prev, eps),
            &sd,
            l1,
            l2,
        );
        let p = system.solve().unwrap();
        let scale = oracle.amax().max(1.0);
        assert!((&p - &oracle).amax() / scale < 1e-9);
        assert!(system.relative_residual(&p) < 1e-9);
        // Gradient of the reweighted quadratic is 2 (lhs P - rhs).
        let grad = (&lhs * &p - &rhs) * 2.0;
        assert!(grad.norm() <= 1e-7 * (lhs.norm() * p.norm() + rhs.norm()));

        // Stationarity of the reweighted quadratic: central differences of
        // F(P) = sum y |P^T x - o|^2 + l1 mmd + l2 sum a_ii |p_i|^2 vanish.
        let f = |pp: &Matrix| {
            let reweighted: f64 = (0..d).map(|i| a_ii(&p_prev, i, eps) * pp.row(i).norm_squared()).sum();
            naive_fit(pp, &o, &y, &x) + l1 * naive_mean_gap(pp, &x, n_s) + l2 * reweighted
        };
        let step = 1e-5;
        for &(i, k) in &[(0, 0), (d / 2, q / 2), (d - 1, q - 1)] {
            let mut up = p.clone();
            up[(i, k)] += step;
            let mut down = p.clone();
            down[(i, k)] -= step;
            let g = (f(&up) - f(&down)) / (2.0 * step);
            assert!(g.abs() < 1e-4 * f(&p).max(1.0), "gradient {g} at ({i},{k})");
        }
    }
}

fn a_ii(p: &Matrix, i: usize, eps: f64) -> f64 {
    1.0 / (2.0 * p.row(i).norm() + eps)
}

#[test]
fn encoder_fit_matches_independent_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for beta in [0.1, 1.0, 10.0] {
        let (d, n, r) = (50, 120, 16);
        let x = gaussian(d, n, &mut rng);
        let b = Matrix::from_fn(r, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let enc = LinearEncoder::fit(&b, &x, beta).unwrap();
        let gram = &x * x.transpose() + Matrix::identity(d, d) * beta;
        let oracle = gauss_solve(&gram, &(&x * b.transpose())).transpose();
        assert!((&enc.phi - &oracle).amax() < 1e-9);
    }
}

#[test]
fn simplex_projection_matches_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for t in 0..10_000 {
        let c = 1 + t % 6;
        let v: Vec<f64> = (0..c).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = simplex_project(&v);
        let want = brute_simplex(&v);
        for (a, b) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-9, "max deviation {worst}");
}

#[test]
fn prototype_update_beats_random_orthonormal_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..100 {
        let (d, q, c, n_s, n_t) = (12, 6, 4, 12, 10);
        let x = gaussian(d, n_s + n_t, &mut rng);
        let p = gaussian(d, q, &mut rng);
        let y = random_semantics(n_s, n_t, c, &mut rng);
        let (_, s2) = degree_diagonals(&y);
        let o = update_prototypes(&p, &x, &y, &s2).unwrap();
        let mut g = p.transpose() * &x * &y;
        for j in 0..c {
            let mut col = g.column_mut(j);
            col /= s2[j];
        }
        let best = frobenius_dot(&o, &g);
        for _ in 0..1000 {
            let cand = random_orthonormal_columns(q, c, &mut rng);
            assert!(best >= frobenius_dot(&cand, &g) - 1e-12);
        }
    }
}

#[test]
fn quantizer_update_beats_random_orthonormal_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (r, c, n) = (4, 8, 30);
        let d = gaussian(c, n, &mut rng);
        let b = Matrix::from_fn(r, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let other = random_orthonormal_columns(c, r, &mut rng).transpose();
        let lambda3 = rng.random_range(0.5..50.0);
        let w = update_quantizer(&b, &d, &other, lambda3).unwrap();
        let gram = &d * d.transpose() + Matrix::identity(c, c) * lambda3;
        let l = gauss_solve(&gram, &(&b * d.transpose() + &other * lambda3).transpose()).transpose();
        assert!((&l - quantizer_target(&b, &d, &other, lambda3).unwrap()).amax() < 1e-9);
        let best = frobenius_dot(&w, &l);
        for _ in 0..1000 {
            let cand = random_orthonormal_columns(c, r, &mut rng).transpose();
            assert!(best >= frobenius_dot(&cand, &l) - 1e-12);
        }
    }
}

#[test]
fn code_update_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let w = gaussian(2, 3, &mut rng);
        let d = gaussian(3, 2, &mut rng);
        let wd = &w * &d;
        let mut best = (f64::INFINITY, Matrix::zeros(2, 2));
        for mask in 0u32..16 {
            let b = Matrix::from_fn(2, 2, |i, j| if mask >> (i * 2 + j) & 1 == 1 { 1.0 } else { -1.0 });
            let cost = (&wd - &b).norm_squared();
            if cost < best.0 {
                best = (cost, b);
            }
        }
        assert_eq!(update_codes(&w, &d), best.1);
    }
}

#[test]
fn objectives_match_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (d, q, c, n_s, n_t) = (20, 6, 3, 15, 12);
    let x = gaussian(d, n_s + n_t, &mut rng);
    let p = gaussian(d, q, &mut rng);
    let o = gaussian(q, c, &mut rng);
    let y = random_semantics(n_s, n_t, c, &mut rng);
    let hp = HyperParams { lambda1: 3.0, lambda2: 0.7, ..HyperParams::default() };
    let terms = stage_one::stage_one_objective(&p, &o, &y, &x, n_s, &hp);
    let oracle = naive_fit(&p, &o, &y, &x) + 3.0 * naive_mean_gap(&p, &x, n_s) + 0.7 * naive_l21(&p);
    assert!(rel_err(terms.total, oracle) < 1e-10);

    let (r, cc) = (4, 8);
    let ds = gaussian(cc, 10, &mut rng);
    let dt = gaussian(cc, 9, &mut rng);
    let pair = QuantizerPair {
        source: random_orthonormal_columns(cc, r, &mut rng).transpose(),
        target: random_orthonormal_columns(cc, r, &mut rng).transpose(),
    };
    let codes = HashCodes { source: update_codes(&pair.source, &ds), target: update_codes(&pair.target, &dt) };
    let got = stage_two_objective(&pair, &codes, &ds, &dt, 2.5);
    let coupling: f64 = pair.source.iter().zip(pair.target.iter()).map(|(a, b)| (a - b).powi(2)).sum();
    let oracle = naive_fit_two(&pair.source, &ds, &codes.source) + naive_fit_two(&pair.target, &dt, &codes.target) + 2.5 * coupling;
    assert!(rel_err(got, oracle) < 1e-12);
}

#[test]
fn hamming_and_ranking_match_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for t in 0..1000 {
        let bits = [1, 7, 16, 63, 64, 65, 128][t % 7];
        let n = 1 + t % 40;
        let q = Matrix::from_fn(bits, 1, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let db = Matrix::from_fn(bits, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 });
        let packed_q = PackedCodes::from_signs(&q);
        let packed_db = PackedCodes::from_signs(&db);
        let ranked = hamming_rank(packed_q.code(0), &packed_db);
        let mut naive: Vec<(u32, usize)> = (0..n).map(|j| (naive_hamming(&q, 0, &db, j), j)).collect();
        naive.sort();
        assert_eq!(ranked.db_indices, naive.iter().map(|&(_, j)| j).collect::<Vec<_>>());
        assert_eq!(ranked.distances, naive.iter().map(|&(d, _)| d).collect::<Vec<_>>());
    }
}

#[test]
fn average_precision_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let n = rng.random_range(1..40);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut relevant: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        relevant[order[rng.random_range(0..n)]] = true;
        let ranked = psca_core::RankedList { db_indices: order.clone(), distances: vec![0; n] };
        let got = average_precision(&ranked, &relevant).unwrap();
        assert!((got - brute_ap(&order, &relevant)).abs() < 1e-12);
    }
}
