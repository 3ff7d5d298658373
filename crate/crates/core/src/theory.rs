//! Closed-form asymptotic limits.
//!
//! For the filtered-white-noise input with autocovariance
//! `R_u(τ) = σ_e² Σ_k h(k) h(k+|τ|)`:
//!
//! - `ΦᵀΦ/N → Σ` with `[Σ]_{ij} = R_u(|i−j|)`,
//! - `√N (ΦᵀΦ/N − Σ) ⇒ Γ` with `C_Γ = E(Γ ⊗ Γ)` given entrywise by
//!   `(c − 3) R_u(k) R_u(l) + Σ_τ [R_u(τ) R_u(τ+k−l) + R_u(τ+k) R_u(τ−l)]`,
//! - `√N ΦᵀV/N ⇒ υ` with covariance `σ² Σ`, hence `√N(θ̂ − θ₀) ⇒ Σ⁻¹υ` with
//!   covariance `σ² Σ⁻¹`,
//! - `√N (VᵀV/N − σ²) ⇒ ρ` with variance `E[v⁴] − σ⁴`.
//!
//! The doubly infinite τ-sum is truncated; because the stored impulse
//! response has finite support the default cutoff is exact for it, and
//! [`TheoryLimits::truncation_error_bound`] quantifies the remaining bias
//! with respect to the untruncated filter.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::signal::{FilterSpec, InnovationSpec};

/// `R_u(τ)`; even in `τ`.
pub fn autocovariance(filter: &FilterSpec, sigma_e2: f64, tau: i64) -> f64 {
    let h = filter.coeffs();
    let lag = tau.unsigned_abs() as usize;
    if lag >= h.len() {
        return 0.0;
    }
    sigma_e2 * h.iter().zip(&h[lag..]).map(|(a, b)| a * b).sum::<f64>()
}

/// Toeplitz matrix `[Σ]_{ij} = R_u(|i−j|)`, rejected when numerically singular.
pub fn sigma_matrix(filter: &FilterSpec, sigma_e2: f64, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Precondition("model order must be positive".into()));
    }
    let r: Vec<f64> = (0..n as i64).map(|tau| autocovariance(filter, sigma_e2, tau)).collect();
    let sigma = DMatrix::from_fn(n, n, |i, j| r[i.abs_diff(j)]);
    let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
    let max_eig = eig.max();
    let min_eig = eig.min();
    if !(min_eig > 1e-12 * max_eig) {
        return Err(Error::DegenerateFilter { min_eig, max_eig });
    }
    Ok(sigma)
}

/// Map a 1-based entry `(i, j)` of the `n² × n²` matrix `C_Γ` to the lag pair
/// `(k, l)`:
///
/// ```text
/// k = |⌊(i−1)/n⌋ − ⌊(j−1)/n⌋|
/// l = |i − j − ⌊(i−1)/n⌋ n + ⌊(j−1)/n⌋ n|
/// ```
pub fn index_map(i: usize, j: usize, n: usize) -> Result<(usize, usize)> {
    let nn = n * n;
    if n == 0 || i == 0 || j == 0 || i > nn || j > nn {
        return Err(Error::Precondition(format!(
            "index_map requires 1 <= i, j <= n² = {nn}, got ({i}, {j})"
        )));
    }
    let bi = ((i - 1) / n) as i64;
    let bj = ((j - 1) / n) as i64;
    let n = n as i64;
    let k = (bi - bj).unsigned_abs() as usize;
    let l = (i as i64 - j as i64 - bi * n + bj * n).unsigned_abs() as usize;
    Ok((k, l))
}

/// Smallest τ-cutoff for which the truncated sum is exact on the filter's
/// finite support.
pub fn default_tau_cutoff(filter: &FilterSpec, n: usize) -> usize {
    filter.order() + n
}

/// Autocovariances `R_u(τ)` for `|τ| ≤ reach`, stored with offset `reach`.
struct AutocovTable {
    values: Vec<f64>,
    reach: i64,
}

impl AutocovTable {
    fn new(filter: &FilterSpec, sigma_e2: f64, reach: i64) -> Self {
        let values = (-reach..=reach)
            .map(|tau| autocovariance(filter, sigma_e2, tau))
            .collect();
        Self { values, reach }
    }

    fn at(&self, tau: i64) -> f64 {
        self.values[(tau + self.reach) as usize]
    }
}

/// `C_Γ` with the τ-sum truncated to `|τ| ≤ tau_cutoff`.
pub fn cgamma_matrix(
    filter: &FilterSpec,
    innov: &InnovationSpec,
    n: usize,
    tau_cutoff: usize,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Precondition("model order must be positive".into()));
    }
    if tau_cutoff == 0 {
        return Err(Error::Precondition("tau_cutoff must be positive".into()));
    }
    let sigma_e2 = innov.variance;
    let excess_kurtosis = innov.moment4 / (sigma_e2 * sigma_e2) - 3.0;
    let cutoff = tau_cutoff as i64;
    let table = AutocovTable::new(filter, sigma_e2, cutoff + 2 * n as i64);
    let nn = n * n;
    let mut c = DMatrix::zeros(nn, nn);
    for i in 1..=nn {
        for j in 1..=nn {
            let (k, l) = index_map(i, j, n)?;
            let (k, l) = (k as i64, l as i64);
            let tau_sum: f64 = (-cutoff..=cutoff)
                .map(|tau| {
                    table.at(tau) * table.at(tau + k - l) + table.at(tau + k) * table.at(tau - l)
                })
                .sum();
            c[(i - 1, j - 1)] = excess_kurtosis * table.at(k) * table.at(l) + tau_sum;
        }
    }
    Ok(c)
}

/// Bound on `|C_Γ(truncated) − C_Γ(exact)|` per entry: the τ-sum mass beyond
/// `tau_cutoff` on the stored filter plus the effect of the filter's own
/// declared tail on every autocovariance.
pub fn cgamma_truncation_bound(
    filter: &FilterSpec,
    innov: &InnovationSpec,
    n: usize,
    tau_cutoff: usize,
) -> f64 {
    let sigma_e2 = innov.variance;
    let kappa = (innov.kurtosis() - 3.0).abs();
    let support = (filter.order() + 2 * n) as i64;
    let table = AutocovTable::new(filter, sigma_e2, support + 2 * n as i64);
    let cutoff = tau_cutoff as i64;

    // Neglected τ-sum mass on the stored (finite-support) filter.
    let mut neglected: f64 = 0.0;
    for k in 0..n as i64 {
        for l in 0..n as i64 {
            let mass: f64 = (-support..=support)
                .filter(|tau| tau.abs() > cutoff)
                .map(|tau| {
                    (table.at(tau) * table.at(tau + k - l)).abs()
                        + (table.at(tau + k) * table.at(tau - l)).abs()
                })
                .sum();
            neglected = neglected.max(mass);
        }
    }

    // Perturbation of R_u from the dropped impulse-response tail.
    let delta = filter.declared_tail_bound();
    if delta == 0.0 {
        return neglected;
    }
    let h_max = filter.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs())).max(delta);
    let per_lag = 2.0 * sigma_e2 * h_max * delta;
    let summed = 4.0 * sigma_e2 * (filter.l1_norm() + delta) * delta;
    let r_max = table.at(0).abs() + per_lag;
    neglected + kappa * 2.0 * r_max * per_lag + 4.0 * r_max * summed
}

/// `σ² Σ⁻¹`, the covariance of the limit of `√N(θ̂ − θ₀)`.
pub fn ls_limit_covariance(sigma: &DMatrix<f64>, sigma2: f64) -> Result<DMatrix<f64>> {
    if sigma2 < 0.0 {
        return Err(Error::Precondition("noise variance must be nonnegative".into()));
    }
    let inv = spd_inverse(sigma, "Sigma")?;
    Ok(inv * sigma2)
}

/// `E[v⁴] − σ⁴`.
pub fn rho_variance(innov_v: &InnovationSpec) -> f64 {
    innov_v.moment4 - innov_v.variance * innov_v.variance
}

/// `θ₀ᵀ Σ θ₀ / σ²`.
pub fn snr_limit(theta0: &[f64], sigma: &DMatrix<f64>, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::Precondition("noise variance must be positive".into()));
    }
    if theta0.len() != sigma.nrows() {
        return Err(Error::Precondition("theta0 length does not match Sigma".into()));
    }
    let theta = nalgebra::DVector::from_column_slice(theta0);
    Ok(theta.dot(&(sigma * &theta)) / sigma2)
}

/// All limit quantities for one experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryLimits {
    pub sigma: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    pub cgamma: DMatrix<f64>,
    pub ls_cov: DMatrix<f64>,
    pub rho_var: f64,
    pub snr_limit: f64,
    /// Noise variance `σ²` the limits were computed for.
    pub noise_variance: f64,
    pub truncation_error_bound: f64,
}

impl TheoryLimits {
    pub fn compute(
        filter: &FilterSpec,
        innov_u: &InnovationSpec,
        innov_v: &InnovationSpec,
        theta0: &[f64],
    ) -> Result<Self> {
        let n = theta0.len();
        let sigma = sigma_matrix(filter, innov_u.variance, n)?;
        let sigma_inv = spd_inverse(&sigma, "Sigma")?;
        let tau_cutoff = default_tau_cutoff(filter, n);
        let cgamma = cgamma_matrix(filter, innov_u, n, tau_cutoff)?;
        let sigma2 = innov_v.variance;
        Ok(Self {
            ls_cov: &sigma_inv * sigma2,
            rho_var: rho_variance(innov_v),
            snr_limit: snr_limit(theta0, &sigma, sigma2)?,
            truncation_error_bound: cgamma_truncation_bound(filter, innov_u, n, tau_cutoff),
            noise_variance: sigma2,
            sigma,
            sigma_inv,
            cgamma,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ar1() -> FilterSpec {
        FilterSpec::ar1(0.5).unwrap()
    }

    #[test]
    fn white_noise_autocovariance() {
        let w = FilterSpec::white();
        assert_eq!(autocovariance(&w, 1.0, 0), 1.0);
        assert_eq!(autocovariance(&w, 1.0, 1), 0.0);
    }

    #[test]
    fn ar1_autocovariance_closed_form() {
        let f = ar1();
        assert!((autocovariance(&f, 1.0, 0) - 4.0 / 3.0).abs() < 1e-9);
        assert!((autocovariance(&f, 1.0, 2) - 1.0 / 3.0).abs() < 1e-9);
        assert_eq!(autocovariance(&f, 1.0, -3), autocovariance(&f, 1.0, 3));
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(
            sigma_matrix(&FilterSpec::white(), 1.0, 2).unwrap(),
            DMatrix::identity(2, 2)
        );
        let s = sigma_matrix(&ar1(), 1.0, 2).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        assert_relative_eq!(s, expected, epsilon = 1e-9);
    }

    #[test]
    fn sigma_is_toeplitz_and_positive_definite() {
        for f in [
            FilterSpec::white(),
            ar1(),
            FilterSpec::ar1(-0.8).unwrap(),
            FilterSpec::fir(vec![1.0, 0.6]).unwrap(),
        ] {
            let s = sigma_matrix(&f, 1.3, 5).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(s[(i, j)], s[(i + 1, j + 1)]);
                    assert_eq!(s[(i, j)], s[(j, i)]);
                }
            }
            assert!(SymmetricEigen::new(s).eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn degenerate_filter_is_rejected() {
        let zero = FilterSpec::fir(vec![0.0]).unwrap();
        assert!(matches!(
            sigma_matrix(&zero, 1.0, 2),
            Err(Error::DegenerateFilter { .. })
        ));
    }

    #[test]
    fn index_map_examples() {
        for n in 1..4 {
            for i in 1..=n * n {
                assert_eq!(index_map(i, i, n).unwrap(), (0, 0));
            }
        }
        assert_eq!(index_map(1, 4, 2).unwrap(), (1, 1));
        assert_eq!(index_map(2, 3, 2).unwrap(), (1, 1));
        assert!(index_map(0, 1, 2).is_err());
        assert!(index_map(5, 1, 2).is_err());
    }

    #[test]
    fn cgamma_scalar_examples() {
        let g = InnovationSpec::gaussian(1.0).unwrap();
        let c = cgamma_matrix(&FilterSpec::white(), &g, 1, 4).unwrap();
        assert_relative_eq!(c[(0, 0)], 2.0, epsilon = 1e-14);
        let u = InnovationSpec::uniform(1.0).unwrap();
        let c = cgamma_matrix(&FilterSpec::white(), &u, 1, 4).unwrap();
        assert_relative_eq!(c[(0, 0)], 0.8, epsilon = 1e-14);
        // σ_e⁴ scaling.
        let g2 = InnovationSpec::gaussian(2.0).unwrap();
        let c = cgamma_matrix(&FilterSpec::white(), &g2, 1, 4).unwrap();
        assert_relative_eq!(c[(0, 0)], 8.0, epsilon = 1e-14);
    }

    #[test]
    fn cgamma_is_symmetric_and_kurtosis_cancels_for_gaussian() {
        let f = ar1();
        let g = InnovationSpec::gaussian(1.0).unwrap();
        let m = InnovationSpec::rademacher_mixture(1.0, 0.0).unwrap();
        let cut = default_tau_cutoff(&f, 3);
        let cg = cgamma_matrix(&f, &g, 3, cut).unwrap();
        let cm = cgamma_matrix(&f, &m, 3, cut).unwrap();
        assert!((&cg - cg.transpose()).amax() < 1e-10);
        assert!((&cg - &cm).amax() < 1e-10);
    }

    #[test]
    fn doubling_cutoff_stays_within_declared_bound() {
        let f = FilterSpec::ar1(0.7).unwrap();
        let innov = InnovationSpec::uniform(1.0).unwrap();
        for cut in [5, 20, default_tau_cutoff(&f, 2)] {
            let a = cgamma_matrix(&f, &innov, 2, cut).unwrap();
            let b = cgamma_matrix(&f, &innov, 2, 2 * cut).unwrap();
            let bound = cgamma_truncation_bound(&f, &innov, 2, cut);
            assert!((&a - &b).amax() <= bound, "cut={cut}");
        }
    }

    #[test]
    fn ls_limit_covariance_examples() {
        let i2 = DMatrix::identity(2, 2);
        assert_eq!(ls_limit_covariance(&i2, 1.0).unwrap(), i2);
        let s = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        let c = ls_limit_covariance(&s, 0.25).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.25, -0.125, -0.125, 0.25]);
        assert_relative_eq!(c, expected, epsilon = 1e-14);
        assert_eq!(ls_limit_covariance(&s, 0.0).unwrap(), DMatrix::zeros(2, 2));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(ls_limit_covariance(&singular, 1.0).is_err());
    }

    #[test]
    fn rho_variance_examples() {
        assert_eq!(rho_variance(&InnovationSpec::gaussian(1.0).unwrap()), 2.0);
        assert_relative_eq!(rho_variance(&InnovationSpec::uniform(1.0).unwrap()), 0.8, epsilon = 1e-15);
        assert_eq!(rho_variance(&InnovationSpec::gaussian(2.0).unwrap()), 8.0);
    }

    #[test]
    fn snr_examples() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0]);
        assert_eq!(snr_limit(&[0.0, 0.0], &s, 1.0).unwrap(), 0.0);
        assert_relative_eq!(snr_limit(&[1.0, 1.0], &s, 1.0).unwrap(), 4.0, epsilon = 1e-14);
        let i3 = DMatrix::identity(3, 3);
        assert_relative_eq!(snr_limit(&[1.0, 2.0, -2.0], &i3, 3.0).unwrap(), 3.0, epsilon = 1e-14);
        assert!(snr_limit(&[1.0, 1.0], &s, 0.0).is_err());
    }

    #[test]
    fn limits_bundle_is_consistent() {
        let f = ar1();
        let g = InnovationSpec::gaussian(1.0).unwrap();
        let v = InnovationSpec::gaussian(0.5).unwrap();
        let lim = TheoryLimits::compute(&f, &g, &v, &[1.0, 0.5, -0.2]).unwrap();
        let eye = DMatrix::identity(3, 3);
        assert!((&lim.sigma * &lim.sigma_inv - eye).norm() < 1e-10);
        assert!(lim.rho_var >= 0.0);
        assert_relative_eq!(lim.ls_cov, &lim.sigma_inv * 0.5, epsilon = 1e-15);
        assert!(lim.truncation_error_bound < 1e-8);
    }
}
