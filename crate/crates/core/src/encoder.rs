//! Out-of-sample extension: a ridge regression from raw features to codes.

use crate::linalg::{self, sign_matrix};
use crate::{Matrix, PscaError, Result};

/// `Phi`, an `r x d` linear map; codes are `sgn(Phi x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEncoder {
    pub phi: Matrix,
    pub beta: f64,
}

impl LinearEncoder {
    /// `Phi = B X^T (X X^T + beta I)^{-1}`, solved against the Gram matrix.
    pub fn fit(codes: &Matrix, x: &Matrix, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(PscaError::Config(format!("beta must be positive, got {beta}")));
        }
        if codes.ncols() != x.ncols() {
            return Err(PscaError::Shape(format!(
                "{} codes for {} samples",
                codes.ncols(),
                x.ncols()
            )));
        }
        let mut gram = x * x.transpose();
        for i in 0..gram.nrows() {
            gram[(i, i)] += beta;
        }
        let phi_t = linalg::solve_spd(&gram, &(x * codes.transpose()), "encoder fit")?;
        Ok(LinearEncoder {
            phi: phi_t.transpose(),
            beta,
        })
    }

    pub fn bits(&self) -> usize {
        self.phi.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.phi.ncols()
    }

    /// Real-valued responses `Phi X`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.nrows() != self.input_dim() {
            return Err(PscaError::Shape(format!(
                "encoder expects {}-dimensional input, got {}",
                self.input_dim(),
                x.nrows()
            )));
        }
        Ok(&self.phi * x)
    }

    /// `sgn(Phi X)` with `sgn(0) = +1`, one code per column of `x`.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        Ok(sign_matrix(&self.project(x)?))
    }
}
