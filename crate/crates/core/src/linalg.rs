//! Small dense linear-algebra helpers shared by the estimators and checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold used for all rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Average `a` with its transpose.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { what: what.to_owned() })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Solve `a x = b` for symmetric positive definite `a`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = a
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { what: what.to_owned() })?;
    Ok(chol.solve(b))
}

/// Upper-triangular factor `R` of a thin QR of `phi`, after checking full
/// column rank against [`RANK_TOLERANCE`].
pub(crate) struct ThinQr {
    pub qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub r: DMatrix<f64>,
}

pub(crate) fn thin_qr(phi: &DMatrix<f64>) -> Result<ThinQr> {
    let (rows, cols) = phi.shape();
    if cols == 0 {
        return Err(Error::Precondition("regressor matrix has no columns".into()));
    }
    if rows < cols {
        return Err(Error::RankDeficient {
            pivot: rows,
            magnitude: 0.0,
            threshold: RANK_TOLERANCE,
        });
    }
    let qr = phi.clone().qr();
    let r = qr.r();
    let largest = r.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    for (i, d) in r.diagonal().iter().enumerate() {
        if !(d.abs() > RANK_TOLERANCE * largest) {
            return Err(Error::RankDeficient {
                pivot: i,
                magnitude: if largest > 0.0 { d.abs() / largest } else { 0.0 },
                threshold: RANK_TOLERANCE,
            });
        }
    }
    Ok(ThinQr { qr, r })
}

/// `(ΦᵀΦ)⁻¹` computed from the QR factor as `R⁻¹R⁻ᵀ`.
pub fn gram_inverse(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ThinQr { r, .. } = thin_qr(phi)?;
    let n = r.ncols();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Precondition("triangular factor is singular".into()))?;
    Ok(symmetrize(&(&r_inv * r_inv.transpose())))
}

/// `‖a − b‖_F / ‖b‖_F`, or the absolute norm when `b` is zero.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
