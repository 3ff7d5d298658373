//! Deterministic matrix inequalities checked on random instances.
//!
//! For SPD `B` with smallest eigenpair `(λ_m, u_m)` and any square `A`:
//!
//! ```text
//! u_mᵀAAᵀu_m / λ_m^k   ≤ Tr(AᵀB⁻ᵏA)          ≤ Tr(AAᵀ) / λ_m^k,   k = 1, 2
//! (u_mᵀAu_m)² / λ_m³   ≤ Tr(B⁻¹AᵀB⁻¹AB⁻¹)    ≤ Tr(AAᵀ) / λ_m³
//! Tr(I − B⁻¹)          ≤ log det B           ≤ Tr(B − I)
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use super::stats::compensated_sum;
use super::Verdict;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng, STREAM_LEMMA};

/// `lower ≤ value ≤ upper` for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sandwich {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

impl Sandwich {
    /// Both inequalities hold up to `slack` relative to `max(1, |value|)`.
    pub fn holds(&self, slack: f64) -> bool {
        let margin = slack * self.value.abs().max(1.0);
        self.lower <= self.value + margin && self.value <= self.upper + margin
    }
}

fn check_square(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if !b.is_square() || a.shape() != b.shape() {
        return Err(Error::Precondition("A and B must be square and of equal size".into()));
    }
    Ok(())
}

/// Eigendecomposition of SPD `b`: eigenvalues, eigenvectors, index of the smallest.
fn spectrum(b: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>, usize)> {
    let eig = SymmetricEigen::new(b.clone());
    let (idx, &lambda) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("nonempty matrix");
    if !(lambda > 0.0) {
        return Err(Error::NotPositiveDefinite { what: "B".into() });
    }
    Ok((eig.eigenvalues, eig.eigenvectors, idx))
}

/// Trace sandwich for `Tr(AᵀB⁻ᵏA)`, `k ∈ {1, 2}`.
///
/// Traces are evaluated in the computed eigenbasis of `B`, so both bounds and
/// the value share one rounding of the spectrum.
pub fn trace_sandwich(a: &DMatrix<f64>, b: &DMatrix<f64>, k: u32) -> Result<Sandwich> {
    check_square(a, b)?;
    if !(k == 1 || k == 2) {
        return Err(Error::Precondition(format!("k must be 1 or 2, got {k}")));
    }
    let (lambda, u, m) = spectrum(b)?;
    // Row i of UᵀA carries the weight 1/λ_i^k.
    let rotated = u.tr_mul(a);
    let row_energy: Vec<f64> = (0..a.nrows()).map(|i| rotated.row(i).norm_squared()).collect();
    let value = compensated_sum((0..a.nrows()).map(|i| row_energy[i] / lambda[i].powi(k as i32)));
    let scale = lambda[m].powi(k as i32);
    Ok(Sandwich {
        lower: row_energy[m] / scale,
        value,
        upper: a.norm_squared() / scale,
    })
}

/// Sandwich for `Tr(B⁻¹AᵀB⁻¹AB⁻¹)`.
pub fn cubic_trace_sandwich(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Sandwich> {
    check_square(a, b)?;
    let (lambda, u, m) = spectrum(b)?;
    // With Ã = UᵀAU the trace is Σ_ij Ã_ji² / (λ_i² λ_j).
    let rotated = u.tr_mul(a) * &u;
    let n = a.nrows();
    let value = compensated_sum(
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| rotated[(j, i)].powi(2) / (lambda[i] * lambda[i] * lambda[j])),
    );
    let quad = rotated[(m, m)];
    Ok(Sandwich {
        lower: quad * quad / lambda[m].powi(3),
        value,
        upper: a.norm_squared() / lambda[m].powi(3),
    })
}

/// `Tr(I − B⁻¹) ≤ log det B ≤ Tr(B − I)`.
pub fn logdet_sandwich(b: &DMatrix<f64>) -> Result<Sandwich> {
    if !b.is_square() {
        return Err(Error::Precondition("B must be square".into()));
    }
    let n = b.nrows();
    let chol = b
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { what: "B".into() })?;
    let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(Sandwich {
        lower: n as f64 - chol.inverse().trace(),
        value: logdet,
        upper: b.trace() - n as f64,
    })
}

fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random SPD matrix with condition number `10^U(0, 6)` and a random eigenbasis.
fn random_spd<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let q = gaussian_matrix(rng, n, n).qr().q();
    let log_cond: f64 = rng.random_range(0.0..6.0);
    let scale: f64 = 10f64.powf(rng.random_range(-2.0..2.0));
    let eigenvalues: Vec<f64> = (0..n)
        .map(|i| match i {
            0 => 1.0,
            1 => 10f64.powf(-log_cond),
            _ => 10f64.powf(-rng.random_range(0.0..=log_cond)),
        })
        .map(|l| l * scale)
        .collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(eigenvalues));
    crate::linalg::symmetrize(&(&q * d * q.transpose()))
}

fn count_violations<F>(trials: usize, seed: u64, which: u64, slack: f64, mut draw: F) -> Result<usize>
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> Result<Sandwich>,
{
    let mut violations = 0;
    for t in 0..trials {
        let mut rng = stream_rng(derive_seed(seed, &[STREAM_LEMMA, which, t as u64]));
        if !draw(&mut rng)?.holds(slack) {
            violations += 1;
        }
    }
    Ok(violations)
}

fn violation_verdict(id: &str, description: &str, violations: usize, slack: f64, seed: u64) -> Verdict {
    Verdict::new(id, description, violations as f64, 0.0, slack, violations == 0, seed)
}

fn require_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("lemma trials must be positive".into()));
    }
    Ok(())
}

/// Trace sandwiches (`k = 1, 2` and the cubic form) on `trials` random instances.
pub fn check_trace_bounds(trials: usize, seed: u64, slack: f64) -> Result<Vec<Verdict>> {
    require_trials(trials)?;
    let instance = |rng: &mut rand_chacha::ChaCha8Rng| {
        let n = rng.random_range(1..=6);
        let b = random_spd(rng, n);
        let a = gaussian_matrix(rng, n, n);
        (a, b)
    };
    let mut verdicts = Vec::new();
    for k in [1u32, 2] {
        let v = count_violations(trials, seed, k as u64, slack, |rng| {
            let (a, b) = instance(rng);
            trace_sandwich(&a, &b, k)
        })?;
        verdicts.push(violation_verdict(
            &format!("lemmas.trace_k{k}"),
            &format!("violations of the Tr(A'B^-{k}A) sandwich"),
            v,
            slack,
            seed,
        ));
    }
    let v = count_violations(trials, seed, 3, slack, |rng| {
        let (a, b) = instance(rng);
        cubic_trace_sandwich(&a, &b)
    })?;
    verdicts.push(violation_verdict(
        "lemmas.trace_cubic",
        "violations of the Tr(B^-1 A' B^-1 A B^-1) sandwich",
        v,
        slack,
        seed,
    ));
    Ok(verdicts)
}

/// Log-det sandwich on `trials` random SPD instances.
pub fn check_logdet_bounds(trials: usize, seed: u64, slack: f64) -> Result<Vec<Verdict>> {
    require_trials(trials)?;
    let v = count_violations(trials, seed, 4, slack, |rng| {
        let n = rng.random_range(1..=6);
        logdet_sandwich(&random_spd(rng, n))
    })?;
    Ok(vec![violation_verdict(
        "lemmas.logdet",
        "violations of Tr(I - B^-1) <= log det B <= Tr(B - I)",
        v,
        slack,
        seed,
    )])
}
