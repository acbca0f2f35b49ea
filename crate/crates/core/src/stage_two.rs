//! Coupled domain-specific quantization.
//!
//! Minimises `|W_s D_s - B_s|^2 + |W_t D_t - B_t|^2 + lambda3 |W_s - W_t|^2`
//! over sign codes `B` and row-orthonormal rotations `W` (`W W^T = I_r`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, sign_matrix};
use crate::reconstruction::ReconstructedFeatures;
use crate::stage_one::{relative_change, HyperParams};
use crate::{Matrix, PscaError, Result};

/// Row-orthonormal `r x C` quantizers for each domain.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerPair {
    pub source: Matrix,
    pub target: Matrix,
}

/// `+-1` codes, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HashCodes {
    pub source: Matrix,
    pub target: Matrix,
}

impl HashCodes {
    /// `[B_s, B_t]`.
    pub fn combined(&self) -> Matrix {
        let (r, ns, nt) = (self.source.nrows(), self.source.ncols(), self.target.ncols());
        let mut b = Matrix::zeros(r, ns + nt);
        b.columns_mut(0, ns).copy_from(&self.source);
        b.columns_mut(ns, nt).copy_from(&self.target);
        b
    }
}

/// Result of [`run_stage_two`].
#[derive(Debug, Clone, PartialEq)]
pub struct StageTwoOutput {
    pub quantizers: QuantizerPair,
    pub codes: HashCodes,
    /// Objective after each pass.
    pub trace: Vec<f64>,
}

/// `B = sgn(W D)` with `sgn(0) = +1`. The objective is separable per entry,
/// so this is the exact minimiser over sign matrices.
pub fn update_codes(w: &Matrix, d: &Matrix) -> Matrix {
    sign_matrix(&(w * d))
}

/// Polar factor of `(B D^T + lambda3 W_other)(D D^T + lambda3 I)^{-1}`.
pub fn update_quantizer(b: &Matrix, d: &Matrix, other: &Matrix, lambda3: f64) -> Result<Matrix> {
    let l = quantizer_target(b, d, other, lambda3)?;
    linalg::polar_factor(&l, "quantizer update").map_err(|e| match e {
        PscaError::DegeneratePrototypes(msg) => PscaError::Numerical(msg),
        other => other,
    })
}

/// The unconstrained matrix `L` whose polar factor is the quantizer update.
pub fn quantizer_target(b: &Matrix, d: &Matrix, other: &Matrix, lambda3: f64) -> Result<Matrix> {
    let c = d.nrows();
    let mut gram = d * d.transpose();
    for i in 0..c {
        gram[(i, i)] += lambda3;
    }
    let rhs = b * d.transpose() + other * lambda3;
    // L G = rhs  <=>  G L^T = rhs^T (G symmetric).
    let lt = linalg::solve_spd(&gram, &rhs.transpose(), "quantizer update")?;
    Ok(lt.transpose())
}

/// `|W D - B|^2 + lambda3 |W - W_other|^2`, the part of the objective that
/// depends on one quantizer.
pub fn quantizer_objective(w: &Matrix, b: &Matrix, d: &Matrix, other: &Matrix, lambda3: f64) -> f64 {
    (w * d - b).norm_squared() + lambda3 * (w - other).norm_squared()
}

// When r < C the polar factor of L is not the exact constrained minimiser, so
// a step that raises the objective is rejected and the current W kept.
fn guarded_quantizer(current: &Matrix, b: &Matrix, d: &Matrix, other: &Matrix, lambda3: f64) -> Result<Matrix> {
    let candidate = update_quantizer(b, d, other, lambda3)?;
    let before = quantizer_objective(current, b, d, other, lambda3);
    let after = quantizer_objective(&candidate, b, d, other, lambda3);
    Ok(if after <= before { candidate } else { current.clone() })
}

pub fn stage_two_objective(
    quantizers: &QuantizerPair,
    codes: &HashCodes,
    d_source: &Matrix,
    d_target: &Matrix,
    lambda3: f64,
) -> f64 {
    (&quantizers.source * d_source - &codes.source).norm_squared()
        + (&quantizers.target * d_target - &codes.target).norm_squared()
        + lambda3 * (&quantizers.source - &quantizers.target).norm_squared()
}

pub fn run_stage_two(features: &ReconstructedFeatures, hp: &HyperParams) -> Result<StageTwoOutput> {
    run_stage_two_observed(&features.source, &features.target, hp, |_, _| {})
}

/// Stage-two loop on arbitrary per-domain feature blocks (`C x n_s`,
/// `C x n_t`); `observer` sees the quantizers and codes after each pass.
pub fn run_stage_two_observed(
    d_source: &Matrix,
    d_target: &Matrix,
    hp: &HyperParams,
    mut observer: impl FnMut(&QuantizerPair, &HashCodes),
) -> Result<StageTwoOutput> {
    if d_source.nrows() != d_target.nrows() {
        return Err(PscaError::Shape(format!(
            "source features have {} rows, target features {}",
            d_source.nrows(),
            d_target.nrows()
        )));
    }
    let c = d_source.nrows();
    if hp.r > c {
        return Err(PscaError::Config(format!(
            "code length {} exceeds the fused feature dimension {c}",
            hp.r
        )));
    }
    if hp.t2 == 0 {
        return Err(PscaError::Config("t2 must be at least 1".into()));
    }
    // Separate stream from anything seeded by `seed` elsewhere.
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed ^ 0x5EED_57A6_E002);
    // Both quantizers start from the same rotation so the coupling term is
    // zero at the start and the two domains share one code geometry.
    let w0 = linalg::random_row_orthonormal(hp.r, c, &mut rng);
    let mut quantizers = QuantizerPair {
        source: w0.clone(),
        target: w0,
    };
    let random_signs = |n: usize, rng: &mut ChaCha8Rng| {
        Matrix::from_fn(hp.r, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
    };
    let mut codes = HashCodes {
        source: random_signs(d_source.ncols(), &mut rng),
        target: random_signs(d_target.ncols(), &mut rng),
    };

    let mut trace = Vec::with_capacity(hp.t2);
    for _ in 0..hp.t2 {
        codes.source = update_codes(&quantizers.source, d_source);
        codes.target = update_codes(&quantizers.target, d_target);
        quantizers.source = guarded_quantizer(&quantizers.source, &codes.source, d_source, &quantizers.target, hp.lambda3)?;
        quantizers.target = guarded_quantizer(&quantizers.target, &codes.target, d_target, &quantizers.source, hp.lambda3)?;

        let obj = stage_two_objective(&quantizers, &codes, d_source, d_target, hp.lambda3);
        if !obj.is_finite() {
            return Err(PscaError::Numerical("stage-two objective is not finite".into()));
        }
        let prev = trace.last().copied();
        trace.push(obj);
        observer(&quantizers, &codes);
        if let Some(prev) = prev {
            if relative_change(prev, obj) < hp.tol {
                break;
            }
        }
    }
    // Final sign step so the returned codes are exactly sgn(W D); it can only
    // lower the objective.
    codes.source = update_codes(&quantizers.source, d_source);
    codes.target = update_codes(&quantizers.target, d_target);
    Ok(StageTwoOutput {
        quantizers,
        codes,
        trace,
    })
}
