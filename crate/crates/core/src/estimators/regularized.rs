//! Regularized LS and the `Ŝ(η) = P(η) + σ̂²(ΦᵀΦ)⁻¹` machinery.

use nalgebra::{DMatrix, DVector};

use super::kernel::KernelSpec;
use super::ls_estimate;
use crate::error::{Error, Result};
use crate::linalg::{gram_inverse, spd_inverse, spd_solve, symmetrize};

/// Largest `N` for which the `N × N` output-space form is evaluated.
pub const MAX_OUTPUT_SPACE_ROWS: usize = 200;

#[derive(Debug, Clone)]
pub struct RlsFit {
    pub theta_tr: DVector<f64>,
    pub p: DMatrix<f64>,
    pub sigma2_used: f64,
    /// `(P + σ²(ΦᵀΦ)⁻¹)⁻¹` at the σ² used for the fit; `None` when that
    /// matrix is singular (only possible with `σ² = 0` and singular `P`).
    pub s_hat_inv: Option<DMatrix<f64>>,
}

fn check_shapes(phi: &DMatrix<f64>, y: &DVector<f64>, p: &DMatrix<f64>) -> Result<()> {
    if phi.nrows() != y.len() {
        return Err(Error::Precondition("Phi and Y have different row counts".into()));
    }
    if p.nrows() != phi.ncols() || p.ncols() != phi.ncols() {
        return Err(Error::Precondition(format!(
            "kernel matrix must be {0}x{0}",
            phi.ncols()
        )));
    }
    Ok(())
}

/// `θ̂ᵀᴿ = (ΦᵀΦ + σ²P⁻¹)⁻¹ΦᵀY`, computed in parameter space.
///
/// `sigma2 = 0` short-circuits to [`ls_estimate`].
pub fn rls_estimate(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    p: &DMatrix<f64>,
    sigma2: f64,
) -> Result<RlsFit> {
    check_shapes(phi, y, p)?;
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Precondition(format!("sigma2 must be nonnegative, got {sigma2}")));
    }
    if sigma2 == 0.0 {
        let theta_tr = ls_estimate(phi, y)?;
        return Ok(RlsFit {
            theta_tr,
            p: p.clone(),
            sigma2_used: 0.0,
            s_hat_inv: spd_inverse(p, "P").ok(),
        });
    }
    let p_inv = spd_inverse(p, "P").map_err(|_| Error::SingularKernel)?;
    let normal = phi.tr_mul(phi) + &p_inv * sigma2;
    let theta_tr = spd_solve(&normal, &phi.tr_mul(y), "Phi'Phi + sigma2 P^-1")?;
    let s_hat_inv = spd_inverse(&s_hat(p, sigma2, phi)?, "S_hat").ok();
    Ok(RlsFit {
        theta_tr,
        p: p.clone(),
        sigma2_used: sigma2,
        s_hat_inv,
    })
}

/// `θ̂ᵀᴿ = PΦᵀQ⁻¹Y` with `Q = ΦPΦᵀ + σ²I_N`; only for `N ≤ 200`.
pub fn rls_estimate_output_space(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    p: &DMatrix<f64>,
    sigma2: f64,
) -> Result<DVector<f64>> {
    check_shapes(phi, y, p)?;
    let rows = phi.nrows();
    if rows > MAX_OUTPUT_SPACE_ROWS {
        return Err(Error::Precondition(format!(
            "output-space form limited to N <= {MAX_OUTPUT_SPACE_ROWS}, got {rows}"
        )));
    }
    if !(sigma2 > 0.0) {
        return Err(Error::Precondition("output-space form needs sigma2 > 0".into()));
    }
    let q = phi * p * phi.transpose() + DMatrix::identity(rows, rows) * sigma2;
    let q_inv_y = spd_solve(&symmetrize(&q), y, "Q")?;
    Ok(p * phi.tr_mul(&q_inv_y))
}

/// `Ŝ(η) = P(η) + σ̂²(ΦᵀΦ)⁻¹`.
pub fn s_hat(p: &DMatrix<f64>, sigma2_hat: f64, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !(sigma2_hat >= 0.0) {
        return Err(Error::Precondition("sigma2_hat must be nonnegative".into()));
    }
    if p.nrows() != phi.ncols() || p.ncols() != phi.ncols() {
        return Err(Error::Precondition("P and Phi dimensions disagree".into()));
    }
    let gram_inv = gram_inverse(phi)?;
    Ok(p + gram_inv * sigma2_hat)
}

/// Both sides of `Ŝ⁻¹ − P⁻¹ = −(1/N) σ̂² Ŝ⁻¹ · N(ΦᵀΦ)⁻¹ · P⁻¹`.
pub fn inverse_gap(
    p: &DMatrix<f64>,
    sigma2_hat: f64,
    phi: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n_samples = phi.nrows() as f64;
    let p_inv = spd_inverse(p, "P")?;
    let s_inv = spd_inverse(&s_hat(p, sigma2_hat, phi)?, "S_hat")?;
    let scaled_gram_inv = gram_inverse(phi)? * n_samples;
    let lhs = &s_inv - &p_inv;
    let rhs = &s_inv * scaled_gram_inv * &p_inv * (-sigma2_hat / n_samples);
    Ok((lhs, rhs))
}

fn first_derivative_of_inverse(a_inv: &DMatrix<f64>, dk: &DMatrix<f64>) -> DMatrix<f64> {
    -(a_inv * dk * a_inv)
}

fn second_derivative_of_inverse(
    a_inv: &DMatrix<f64>,
    dk: &DMatrix<f64>,
    dl: &DMatrix<f64>,
    dkl: &DMatrix<f64>,
) -> DMatrix<f64> {
    a_inv * dl * a_inv * dk * a_inv - a_inv * dkl * a_inv + a_inv * dk * a_inv * dl * a_inv
}

fn p_inverse(spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    spd_inverse(&spec.matrix(), "P")
}

fn s_hat_inverse(spec: &KernelSpec, sigma2_hat: f64, phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spec.validate()?;
    spd_inverse(&s_hat(&spec.matrix(), sigma2_hat, phi)?, "S_hat")
}

/// `∂P⁻¹/∂η_k = −P⁻¹ (∂P/∂η_k) P⁻¹` (0-based `k`).
pub fn pinv_derivative_1(spec: &KernelSpec, k: usize) -> Result<DMatrix<f64>> {
    let dk = spec.derivative(k)?;
    Ok(first_derivative_of_inverse(&p_inverse(spec)?, &dk))
}

/// `∂Ŝ⁻¹/∂η_k = −Ŝ⁻¹ (∂P/∂η_k) Ŝ⁻¹`.
pub fn shat_derivative_1(
    spec: &KernelSpec,
    k: usize,
    sigma2_hat: f64,
    phi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dk = spec.derivative(k)?;
    Ok(first_derivative_of_inverse(&s_hat_inverse(spec, sigma2_hat, phi)?, &dk))
}

/// `∂²P⁻¹/∂η_k∂η_l`, three-term expansion.
pub fn pinv_derivative_2(spec: &KernelSpec, k: usize, l: usize) -> Result<DMatrix<f64>> {
    let dk = spec.derivative(k)?;
    let dl = spec.derivative(l)?;
    let dkl = spec.second_derivative(k, l)?;
    Ok(second_derivative_of_inverse(&p_inverse(spec)?, &dk, &dl, &dkl))
}

/// `∂²Ŝ⁻¹/∂η_k∂η_l`, three-term expansion.
pub fn shat_derivative_2(
    spec: &KernelSpec,
    k: usize,
    l: usize,
    sigma2_hat: f64,
    phi: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dk = spec.derivative(k)?;
    let dl = spec.derivative(l)?;
    let dkl = spec.second_derivative(k, l)?;
    let s_inv = s_hat_inverse(spec, sigma2_hat, phi)?;
    Ok(second_derivative_of_inverse(&s_inv, &dk, &dl, &dkl))
}

/// Left and right sides of the ridge gap identity
///
/// ```text
/// Ŝ(η̂)⁻¹ − P(η*)⁻¹ = −(η̂ − η*) Ŝ(η̂)⁻¹ P(η*)⁻¹ − σ̂² Ŝ(η̂)⁻¹ (ΦᵀΦ)⁻¹ P(η*)⁻¹
/// ```
/// with `P(η) = ηI`.
#[derive(Debug, Clone)]
pub struct TaylorGap {
    pub lhs: DMatrix<f64>,
    pub rhs: DMatrix<f64>,
}

pub fn ridge_taylor_gap(
    eta_hat: f64,
    eta_star: f64,
    sigma2_hat: f64,
    phi: &DMatrix<f64>,
) -> Result<TaylorGap> {
    if !(eta_hat > 0.0 && eta_star > 0.0) {
        return Err(Error::Precondition("ridge hyperparameters must be positive".into()));
    }
    if !(sigma2_hat >= 0.0) {
        return Err(Error::Precondition("sigma2_hat must be nonnegative".into()));
    }
    let n = phi.ncols();
    let eye = DMatrix::<f64>::identity(n, n);
    // With σ̂² = 0 the Gram term drops out and Φ is not needed.
    let gram_inv = if sigma2_hat == 0.0 {
        DMatrix::zeros(n, n)
    } else {
        gram_inverse(phi)?
    };
    let s_hat = &eye * eta_hat + &gram_inv * sigma2_hat;
    let s_inv = spd_inverse(&s_hat, "S_hat")?;
    let p_star_inv = &eye / eta_star;
    let lhs = &s_inv - &p_star_inv;
    let rhs = &s_inv * &p_star_inv * (-(eta_hat - eta_star))
        - &s_inv * &gram_inv * &p_star_inv * sigma2_hat;
    Ok(TaylorGap { lhs, rhs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn design(rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |i, j| (((i + 1) * (j + 2)) as f64 * 0.173).sin() + 0.1 * j as f64)
    }

    #[test]
    fn zero_sigma2_is_least_squares() {
        let phi = design(25, 3);
        let y = DVector::from_fn(25, |i, _| (i as f64 * 0.3).cos());
        let p = KernelSpec::tc(1.0, 0.7, 3).unwrap().matrix();
        let fit = rls_estimate(&phi, &y, &p, 0.0).unwrap();
        assert_eq!(fit.theta_tr, ls_estimate(&phi, &y).unwrap());
    }

    #[test]
    fn identity_design_shrinks_by_eta_over_eta_plus_sigma2() {
        let n = 4;
        let phi = DMatrix::identity(n, n);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let (eta, s2) = (2.0, 0.5);
        let fit = rls_estimate(&phi, &y, &(DMatrix::identity(n, n) * eta), s2).unwrap();
        assert_relative_eq!(fit.theta_tr, &y * (eta / (eta + s2)), epsilon = 1e-14);
    }

    #[test]
    fn vanishing_penalty_approaches_ls() {
        let phi = design(40, 3);
        let y = DVector::from_fn(40, |i, _| (i as f64 * 0.11).sin());
        let ls = ls_estimate(&phi, &y).unwrap();
        let fit = rls_estimate(&phi, &y, &(DMatrix::identity(3, 3) * 1e8), 0.3).unwrap();
        assert!((&fit.theta_tr - &ls).norm() <= 1e-6 * ls.norm());
    }

    #[test]
    fn singular_kernel_with_positive_sigma2() {
        let phi = design(10, 3);
        let y = DVector::zeros(10);
        let p = KernelSpec::dc(1.0, 0.5, 1.0, 3).unwrap().matrix();
        let err = rls_estimate(&phi, &y, &p, 1.0).unwrap_err();
        assert!(matches!(err, Error::SingularKernel));
        assert!(err.to_string().contains("positive definite kernel"));
    }

    #[test]
    fn two_forms_agree() {
        let phi = design(60, 4);
        let y = DVector::from_fn(60, |i, _| (i as f64 * 0.7).sin());
        let p = KernelSpec::dc(1.2, 0.8, 0.5, 4).unwrap().matrix();
        let a = rls_estimate(&phi, &y, &p, 0.4).unwrap().theta_tr;
        let b = rls_estimate_output_space(&phi, &y, &p, 0.4).unwrap();
        assert!((&a - &b).norm() <= 1e-8 * b.norm());
        assert!(rls_estimate_output_space(&design(201, 2), &DVector::zeros(201), &DMatrix::identity(2, 2), 1.0).is_err());
    }

    #[test]
    fn s_hat_with_orthogonal_design() {
        let n_samples: f64 = 8.0;
        let phi = DMatrix::identity(2, 2) * n_samples.sqrt();
        let s = s_hat(&(DMatrix::identity(2, 2) * 1.5), 0.4, &phi).unwrap();
        assert_relative_eq!(s, DMatrix::identity(2, 2) * (1.5 + 0.4 / n_samples), epsilon = 1e-14);
        let p = KernelSpec::tc(1.0, 0.6, 2).unwrap().matrix();
        assert_eq!(s_hat(&p, 0.0, &phi).unwrap(), p);
    }

    #[test]
    fn gap_identity_holds() {
        let phi = design(50, 3);
        let p = KernelSpec::tc(0.9, 0.75, 3).unwrap().matrix();
        let (lhs, rhs) = inverse_gap(&p, 0.8, &phi).unwrap();
        assert!((&lhs - &rhs).norm() <= 1e-12 * rhs.norm().max(1.0));
    }

    #[test]
    fn ridge_inverse_derivatives() {
        let spec = KernelSpec::ridge(2.0, 3).unwrap();
        assert_relative_eq!(pinv_derivative_1(&spec, 0).unwrap(), DMatrix::identity(3, 3) * -0.25, epsilon = 1e-15);
        assert_relative_eq!(pinv_derivative_2(&spec, 0, 0).unwrap(), DMatrix::identity(3, 3) * 0.25, epsilon = 1e-15);
    }

    #[test]
    fn tc_scale_derivative_of_inverse() {
        let spec = KernelSpec::tc(1.5, 0.7, 3).unwrap();
        let p_inv = spd_inverse(&spec.matrix(), "P").unwrap();
        let expected = -p_inv / 1.5;
        assert!((pinv_derivative_1(&spec, 0).unwrap() - &expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn taylor_gap_special_cases() {
        let phi = design(30, 2);
        let same = ridge_taylor_gap(1.0, 1.0, 0.5, &phi).unwrap();
        assert!((&same.lhs - &same.rhs).amax() < 1e-14);
        let s_inv = spd_inverse(&s_hat(&DMatrix::identity(2, 2), 0.5, &phi).unwrap(), "S").unwrap();
        let pure = -(&s_inv * gram_inverse(&phi).unwrap()) * 0.5;
        assert!((&same.rhs - pure).amax() < 1e-15);

        // σ̂² = 0: 1/η̂ − 1/η* times the identity, Φ unused.
        let junk = DMatrix::zeros(3, 2);
        let g = ridge_taylor_gap(1.3, 1.0, 0.0, &junk).unwrap();
        let expected = DMatrix::identity(2, 2) * (-(1.3 - 1.0) / (1.3 * 1.0));
        assert_relative_eq!(g.lhs, expected, epsilon = 1e-15);
        assert_relative_eq!(g.rhs, expected, epsilon = 1e-15);
    }
}
