//! Least-squares and regularized least-squares estimators.

mod kernel;
mod regularized;

pub use kernel::{kernel_matrix, KernelFamily, KernelSpec};
pub use regularized::{
    inverse_gap, pinv_derivative_1, pinv_derivative_2, ridge_taylor_gap, rls_estimate,
    rls_estimate_output_space, s_hat, shat_derivative_1, shat_derivative_2, RlsFit, TaylorGap,
    MAX_OUTPUT_SPACE_ROWS,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::thin_qr;

/// `θ̂ = (ΦᵀΦ)⁻¹ΦᵀY`, solved through a Householder QR of `Φ`.
pub fn ls_estimate(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if phi.nrows() != y.len() {
        return Err(Error::Precondition(format!(
            "Phi has {} rows but Y has {} entries",
            phi.nrows(),
            y.len()
        )));
    }
    let qr = thin_qr(phi)?;
    let n = phi.ncols();
    let mut qty = y.clone();
    qr.qr.q_tr_mul(&mut qty);
    qr.r
        .solve_upper_triangular(&qty.rows(0, n).into_owned())
        .ok_or_else(|| Error::Precondition("triangular factor is singular".into()))
}

/// `‖Y − Φθ̂‖² / (N − n)`.
pub fn noise_variance_estimate(
    y: &DVector<f64>,
    phi: &DMatrix<f64>,
    theta_ls: &DVector<f64>,
) -> Result<f64> {
    let (rows, cols) = phi.shape();
    if rows <= cols {
        return Err(Error::Precondition(format!(
            "N > n required for the noise variance estimate (n={cols}, N={rows})"
        )));
    }
    if y.len() != rows || theta_ls.len() != cols {
        return Err(Error::Precondition("dimension mismatch in noise variance estimate".into()));
    }
    let residual = y - phi * theta_ls;
    Ok(residual.norm_squared() / (rows - cols) as f64)
}

/// The three building blocks of `θ̂ = θ₀ + N(ΦᵀΦ)⁻¹ · ΦᵀV/N`.
#[derive(Debug, Clone)]
pub struct LsDecomposition {
    pub scaled_gram_inverse: DMatrix<f64>,
    pub cross_mean: DVector<f64>,
    pub theta: DVector<f64>,
}

/// Evaluate the decomposition route for `θ̂` given the true noise vector.
pub fn ls_decomposition(
    phi: &DMatrix<f64>,
    v: &DVector<f64>,
    theta0: &DVector<f64>,
) -> Result<LsDecomposition> {
    let n_samples = phi.nrows() as f64;
    let scaled_gram_inverse = crate::linalg::gram_inverse(phi)? * n_samples;
    let cross_mean = phi.tr_mul(v) / n_samples;
    let theta = theta0 + &scaled_gram_inverse * &cross_mean;
    Ok(LsDecomposition {
        scaled_gram_inverse,
        cross_mean,
        theta,
    })
}
