//! Ensemble checks against the closed-form limits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ensemble::{Ensemble, EnsembleLevel, ReplicationRecord};
use super::stats::{
    compensated_sum, covariance, ks_distance_standard_normal, loglog_slope, mean, median, variance,
    MeanWithError,
};
use super::Verdict;
use crate::error::{Error, Result};
use crate::estimators::KernelSpec;
use crate::linalg::{gram_inverse, relative_frobenius, spd_inverse};
use crate::theory::TheoryLimits;

/// Replications required at the largest `N` for distributional checks.
pub const MIN_CLT_REPS: usize = 1000;

fn strictly_decreasing(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[1] < w[0])
}

fn grid_as_f64(ens: &Ensemble) -> Vec<f64> {
    ens.n_grid().iter().map(|&n| n as f64).collect()
}

fn seed(ens: &Ensemble) -> u64 {
    ens.config.master_seed
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Smallest admissible `max(N_grid) / min(N_grid)` for slope and monotonicity checks.
pub const MIN_GRID_SPAN: f64 = 64.0;

/// Grid precondition shared by the convergence and rate checks.
fn grid_verdict(ens: &Ensemble, id: &str) -> Option<Verdict> {
    let grid = ens.n_grid();
    let span = *grid.last().unwrap() as f64 / grid[0] as f64;
    if grid.len() >= 4 && span >= MIN_GRID_SPAN {
        None
    } else {
        Some(Verdict::new(
            id,
            "N grid needs at least 4 points and max/min of at least 64",
            span,
            MIN_GRID_SPAN,
            0.0,
            false,
            seed(ens),
        ))
    }
}

/// Median normalized deviation along the grid: strictly decreasing and
/// below `as_final_rel` at the largest `N`.
pub fn check_as_convergence(ens: &Ensemble, limits: &TheoryLimits) -> Result<Vec<Verdict>> {
    let tol = &ens.config.tolerances;
    if let Some(v) = grid_verdict(ens, "as.grid") {
        return Ok(vec![v]);
    }
    let sigma = &limits.sigma;
    let sigma_inv = &limits.sigma_inv;
    let s2 = limits.noise_variance;
    let theta0 = DVector::from_column_slice(&ens.config.setup.theta0);

    let sigma_scale = sigma.norm();
    let cross_scale = (s2 * sigma.trace()).sqrt();
    let inv_scale = sigma_inv.norm();
    let theta_scale = (s2 * sigma_inv.trace()).sqrt();

    type Deviation<'a> = Box<dyn Fn(&ReplicationRecord) -> Result<f64> + 'a>;
    let stats: Vec<(&str, &str, Deviation)> = vec![
        (
            "as.gram",
            "Phi'Phi/N -> Sigma",
            Box::new(|r| Ok((&r.gram - sigma).norm() / sigma_scale)),
        ),
        (
            "as.cross",
            "Phi'V/N -> 0",
            Box::new(|r| Ok(r.cross.norm() / cross_scale)),
        ),
        (
            "as.noise_power",
            "V'V/N -> sigma2",
            Box::new(|r| Ok((r.noise_power - s2).abs() / s2)),
        ),
        (
            "as.gram_inverse",
            "N(Phi'Phi)^-1 -> Sigma^-1",
            Box::new(|r| {
                let inv = spd_inverse(&r.gram, "Phi'Phi/N")?;
                Ok((inv - sigma_inv).norm() / inv_scale)
            }),
        ),
        (
            "as.theta",
            "theta_LS -> theta0",
            Box::new(|r| Ok((&r.theta_ls - &theta0).norm() / theta_scale)),
        ),
        (
            "as.sigma2_hat",
            "sigma2_hat -> sigma2",
            Box::new(|r| Ok((r.sigma2_hat - s2).abs() / s2)),
        ),
    ];

    let mut verdicts = Vec::new();
    for (id, description, dev) in &stats {
        let mut medians = Vec::with_capacity(ens.levels.len());
        for level in &ens.levels {
            let d = level.records.iter().map(dev).collect::<Result<Vec<_>>>()?;
            medians.push(median(&d));
        }
        let last = *medians.last().unwrap();
        let passed = strictly_decreasing(&medians) && last < tol.as_final_rel;
        verdicts.push(
            Verdict::new(*id, *description, last, 0.0, tol.as_final_rel, passed, seed(ens))
                .with_series(medians),
        );
    }

    let first = &ens.levels[0].records;
    let last = &ens.largest().records;
    let pairs = first.len().min(last.len());
    let improved = first
        .iter()
        .zip(last)
        .filter(|(a, b)| (&b.theta_ls - &theta0).norm() < (&a.theta_ls - &theta0).norm())
        .count();
    let fraction = improved as f64 / pairs as f64;
    verdicts.push(Verdict::new(
        "as.theta_pairs",
        "fraction of replications whose theta error shrinks from the smallest to the largest N",
        fraction,
        1.0,
        tol.as_pair_fraction,
        fraction >= tol.as_pair_fraction,
        seed(ens),
    ));
    Ok(verdicts)
}

/// `mean((x−x̄)⊗(x−x̄))` over replications, with entry `[(a,b),(c,d)]`
/// holding the average of `D_ac D_bd` for centred `D`.
fn kronecker_second_moment(samples: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = samples[0].nrows();
    let reps = samples.len();
    let flat: Vec<DVector<f64>> = samples.iter().map(vec_of).collect();
    let centre = super::stats::mean_vector(&flat);
    let centred: Vec<DMatrix<f64>> = samples
        .iter()
        .map(|s| s - DMatrix::from_column_slice(n, n, centre.as_slice()))
        .collect();
    let dim = n * n;
    let mut moment = DMatrix::zeros(dim, dim);
    let mut stderr = DMatrix::zeros(dim, dim);
    let correction = reps as f64 / (reps - 1) as f64;
    for i in 0..dim {
        let (a, b) = (i / n, i % n);
        for j in 0..dim {
            let (c, d) = (j / n, j % n);
            let products: Vec<f64> = centred.iter().map(|m| m[(a, c)] * m[(b, d)]).collect();
            let mw = MeanWithError::of(&products);
            moment[(i, j)] = mw.mean * correction;
            stderr[(i, j)] = mw.stderr * correction;
        }
    }
    (moment, stderr)
}

/// Covariances, cross-moments and a normality statistic at the largest `N`.
pub fn check_clt(ens: &Ensemble, limits: &TheoryLimits) -> Result<Vec<Verdict>> {
    let level = ens.largest();
    if level.reps() < MIN_CLT_REPS {
        return Err(Error::InsufficientReplications {
            check: "clt".into(),
            got: level.reps(),
            required: MIN_CLT_REPS,
        });
    }
    let tol = &ens.config.tolerances;
    let s = seed(ens);
    let root_n = (level.n_samples as f64).sqrt();
    let s2 = limits.noise_variance;
    let theta0 = DVector::from_column_slice(&ens.config.setup.theta0);
    let n = theta0.len();
    let mut verdicts = Vec::new();

    let gammas: Vec<DMatrix<f64>> = level
        .records
        .iter()
        .map(|r| (&r.gram - &limits.sigma) * root_n)
        .collect();
    let (cgamma_emp, cgamma_se) = kronecker_second_moment(&gammas);
    let err = relative_frobenius(&cgamma_emp, &limits.cgamma);
    verdicts.push(Verdict::new(
        "clt.cgamma",
        "covariance of sqrt(N) vec(Phi'Phi/N - Sigma) vs C_Gamma (relative Frobenius)",
        err,
        0.0,
        tol.clt_cgamma_rel,
        err < tol.clt_cgamma_rel,
        s,
    ));
    let mut band = 0.0f64;
    for i in 0..n * n {
        for j in i..n * n {
            let se = cgamma_se[(i, j)];
            let dev = (cgamma_emp[(i, j)] - limits.cgamma[(i, j)]).abs();
            let z = if se > 0.0 { dev / se } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
            band = band.max(z);
        }
    }
    verdicts.push(Verdict::new(
        "clt.cgamma_band",
        "largest entrywise |C_Gamma estimate - theory| in ensemble standard errors",
        band,
        0.0,
        tol.cgamma_band_z,
        band <= tol.cgamma_band_z,
        s,
    ));

    let upsilons: Vec<DVector<f64>> = level.records.iter().map(|r| &r.cross * root_n).collect();
    let target = &limits.sigma * s2;
    let err = relative_frobenius(&covariance(&upsilons), &target);
    verdicts.push(Verdict::new(
        "clt.upsilon",
        "covariance of sqrt(N) Phi'V/N vs sigma2 Sigma (relative Frobenius)",
        err,
        0.0,
        tol.clt_cov_rel,
        err < tol.clt_cov_rel,
        s,
    ));

    let rhos: Vec<f64> = level
        .records
        .iter()
        .map(|r| (r.noise_power - s2) * root_n)
        .collect();
    let rho_var = variance(&rhos);
    let err = (rho_var - limits.rho_var).abs() / limits.rho_var;
    verdicts.push(Verdict::new(
        "clt.rho",
        "variance of sqrt(N)(V'V/N - sigma2) vs E v^4 - sigma^4 (relative)",
        err,
        0.0,
        tol.clt_cov_rel,
        err < tol.clt_cov_rel,
        s,
    ));

    let thetas: Vec<DVector<f64>> = level
        .records
        .iter()
        .map(|r| (&r.theta_ls - &theta0) * root_n)
        .collect();
    let err = relative_frobenius(&covariance(&thetas), &limits.ls_cov);
    verdicts.push(Verdict::new(
        "clt.theta",
        "covariance of sqrt(N)(theta_LS - theta0) vs sigma2 Sigma^-1 (relative Frobenius)",
        err,
        0.0,
        tol.clt_cov_rel,
        err < tol.clt_cov_rel,
        s,
    ));

    let max_z = |series: Vec<Vec<f64>>| {
        series
            .iter()
            .map(|p| MeanWithError::of(p).z_score())
            .fold(0.0f64, f64::max)
    };
    let mut upsilon_gamma = Vec::new();
    let mut rho_gamma = Vec::new();
    for a in 0..n {
        for b in a..n {
            for i in 0..n {
                upsilon_gamma.push(
                    upsilons
                        .iter()
                        .zip(&gammas)
                        .map(|(u, g)| u[i] * g[(a, b)])
                        .collect(),
                );
            }
            rho_gamma.push(rhos.iter().zip(&gammas).map(|(r, g)| r * g[(a, b)]).collect());
        }
    }
    let rho_upsilon: Vec<Vec<f64>> = (0..n)
        .map(|i| rhos.iter().zip(&upsilons).map(|(r, u)| r * u[i]).collect())
        .collect();
    for (id, description, series) in [
        ("clt.cross_upsilon_gamma", "max |mean|/SE of upsilon (x) Gamma entries", upsilon_gamma),
        ("clt.cross_rho_upsilon", "max |mean|/SE of rho * upsilon entries", rho_upsilon),
        ("clt.cross_rho_gamma", "max |mean|/SE of rho * Gamma entries", rho_gamma),
    ] {
        let z = max_z(series);
        verdicts.push(Verdict::new(
            id,
            description,
            z,
            0.0,
            tol.cross_moment_z,
            z < tol.cross_moment_z,
            s,
        ));
    }

    let w = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let sd = w.dot(&(&limits.ls_cov * &w)).sqrt();
    let projected: Vec<f64> = thetas.iter().map(|t| w.dot(t) / sd).collect();
    let ks = ks_distance_standard_normal(&projected);
    let critical = tol.normality_ks_coeff / (projected.len() as f64).sqrt();
    verdicts.push(Verdict::new(
        "clt.normality",
        "KS distance of the standardized projection of sqrt(N)(theta_LS - theta0) to N(0,1)",
        ks,
        0.0,
        critical,
        ks < critical,
        s,
    ));
    Ok(verdicts)
}

fn slope_verdict(
    id: &str,
    description: &str,
    grid: &[f64],
    values: Vec<f64>,
    target: f64,
    halfwidth: f64,
    seed: u64,
) -> Verdict {
    let fit = loglog_slope(grid, &values);
    let passed = (fit.slope - target).abs() <= halfwidth;
    Verdict::new(id, description, fit.slope, target, halfwidth, passed, seed)
        .with_stderr(fit.stderr)
        .with_series(values)
}

fn rms(values: &[f64]) -> f64 {
    mean(&values.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt()
}

/// Log-log slopes of ensemble RMS deviations (`−1/2`) and mean magnitudes of
/// `ΦᵀΦ`, `VᵀV` (`+1`).
pub fn check_op_rates(ens: &Ensemble, limits: &TheoryLimits) -> Result<Vec<Verdict>> {
    if let Some(v) = grid_verdict(ens, "rates.grid") {
        return Ok(vec![v]);
    }
    let tol = &ens.config.tolerances;
    let grid = grid_as_f64(ens);
    let s2 = limits.noise_variance;
    let theta0 = DVector::from_column_slice(&ens.config.setup.theta0);
    let sigma = &limits.sigma;

    let per_level = |f: &dyn Fn(&EnsembleLevel) -> f64| ens.levels.iter().map(f).collect::<Vec<_>>();
    let rms_of = |g: &dyn Fn(&ReplicationRecord) -> f64| {
        per_level(&|l: &EnsembleLevel| rms(&l.column(g)))
    };

    let half: [(&str, &str, Vec<f64>); 5] = [
        (
            "rates.theta",
            "RMS ||theta_LS - theta0|| vs N",
            rms_of(&|r| (&r.theta_ls - &theta0).norm()),
        ),
        ("rates.cross", "RMS ||Phi'V/N|| vs N", rms_of(&|r| r.cross.norm())),
        (
            "rates.sigma2_hat",
            "RMS |sigma2_hat - sigma2| vs N",
            rms_of(&|r| r.sigma2_hat - s2),
        ),
        (
            "rates.gram",
            "RMS ||Phi'Phi/N - Sigma||_F vs N",
            rms_of(&|r| (&r.gram - sigma).norm()),
        ),
        (
            "rates.noise_power",
            "RMS |V'V/N - sigma2| vs N",
            rms_of(&|r| r.noise_power - s2),
        ),
    ];
    let mut verdicts: Vec<Verdict> = half
        .into_iter()
        .map(|(id, d, values)| {
            slope_verdict(id, d, &grid, values, -0.5, tol.rate_slope_halfwidth, seed(ens))
        })
        .collect();

    let gram_growth = per_level(&|l: &EnsembleLevel| {
        let k = l.n_samples as f64;
        mean(&l.column(|r| r.gram.norm() * k))
    });
    let noise_growth = per_level(&|l: &EnsembleLevel| {
        let k = l.n_samples as f64;
        mean(&l.column(|r| r.noise_power * k))
    });
    verdicts.push(slope_verdict(
        "rates.gram_total",
        "mean ||Phi'Phi||_F vs N",
        &grid,
        gram_growth,
        1.0,
        tol.rate_slope_halfwidth,
        seed(ens),
    ));
    verdicts.push(slope_verdict(
        "rates.noise_total",
        "mean V'V vs N",
        &grid,
        noise_growth,
        1.0,
        tol.rate_slope_halfwidth,
        seed(ens),
    ));
    Ok(verdicts)
}

/// The six scaled moment products must stay bounded along the grid.
pub fn check_moment_bounds(ens: &Ensemble, limits: &TheoryLimits) -> Result<Vec<Verdict>> {
    let tol = &ens.config.tolerances;
    let grid = grid_as_f64(ens);
    let s2 = limits.noise_variance;
    let sigma = &limits.sigma;
    let setup = &ens.config.setup;
    let higher_order = setup.innov_u.moment16.is_some() && setup.innov_v.moment16.is_some();

    type Stat<'a> = Box<dyn Fn(&ReplicationRecord) -> f64 + 'a>;
    let mut products: Vec<(&str, &str, Stat, i32, i32)> = vec![
        (
            "moments.cross4",
            "N^2 mean ||Phi'V/N||^4",
            Box::new(|r| r.cross.norm()),
            4,
            2,
        ),
        (
            "moments.gram4",
            "N^2 mean ||Phi'Phi/N - Sigma||_F^4",
            Box::new(|r| (&r.gram - sigma).norm()),
            4,
            2,
        ),
        (
            "moments.noise4",
            "N^2 mean |V'V/N - sigma2|^4",
            Box::new(|r| (r.noise_power - s2).abs()),
            4,
            2,
        ),
    ];
    if higher_order {
        products.extend([
            (
                "moments.cross8",
                "N^4 mean ||Phi'V/N||^8",
                Box::new(|r: &ReplicationRecord| r.cross.norm()) as Stat,
                8,
                4,
            ),
            (
                "moments.gram8",
                "N^4 mean ||Phi'Phi/N - Sigma||_F^8",
                Box::new(|r: &ReplicationRecord| (&r.gram - sigma).norm()),
                8,
                4,
            ),
            (
                "moments.noise8",
                "N^4 mean |V'V/N - sigma2|^8",
                Box::new(|r: &ReplicationRecord| (r.noise_power - s2).abs()),
                8,
                4,
            ),
        ]);
    }

    let mut verdicts = Vec::new();
    for (id, description, stat, power, scale_power) in &products {
        let values: Vec<f64> = ens
            .levels
            .iter()
            .map(|l| {
                let k = l.n_samples as f64;
                let moment = compensated_sum(l.records.iter().map(|r| stat(r).powi(*power)))
                    / l.reps() as f64;
                k.powi(*scale_power) * moment
            })
            .collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(0.0, f64::max);
        let ratio = hi / lo;
        verdicts.push(slope_verdict(
            &format!("{id}.slope"),
            description,
            &grid,
            values.clone(),
            0.0,
            tol.moment_slope_halfwidth,
            seed(ens),
        ));
        verdicts.push(
            Verdict::new(
                format!("{id}.ratio"),
                format!("max/min of {description} along the grid"),
                ratio,
                1.0,
                tol.moment_ratio_max,
                ratio <= tol.moment_ratio_max,
                seed(ens),
            )
            .with_series(values),
        );
    }
    Ok(verdicts)
}

/// `‖Ŝ⁻¹‖_F` and `‖P⁻¹‖_F` at one hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormPair {
    pub eta: Vec<f64>,
    pub shat_inv_norm: f64,
    pub p_inv_norm: f64,
}

/// Report both Frobenius norms along a user-supplied hyperparameter sequence.
pub fn shat_norm_diagnostic(
    kernel: &KernelSpec,
    etas: &[Vec<f64>],
    sigma2_hat: f64,
    phi: &DMatrix<f64>,
) -> Result<Vec<NormPair>> {
    let gram_inv = gram_inverse(phi)?;
    etas.iter()
        .map(|eta| {
            let spec = kernel.with_eta(eta.clone())?;
            let p = spec.matrix();
            let p_inv = spd_inverse(&p, "P")?;
            let s_inv = spd_inverse(&(&p + &gram_inv * sigma2_hat), "S_hat")?;
            Ok(NormPair {
                eta: eta.clone(),
                shat_inv_norm: s_inv.norm(),
                p_inv_norm: p_inv.norm(),
            })
        })
        .collect()
}

/// Gaps `Ŝ(η)⁻¹ − P(η)⁻¹` and their first hyperparameter derivatives at a fixed η.
pub fn check_shat_limits(ens: &Ensemble, kernel: &KernelSpec) -> Result<Vec<Verdict>> {
    kernel.validate()?;
    let tol = &ens.config.tolerances;
    let grid = grid_as_f64(ens);
    let s = seed(ens);
    let p = kernel.matrix();
    let p_inv = spd_inverse(&p, "P")?;
    let p_inv_norm = p_inv.norm();
    let derivatives = (0..kernel.num_hyperparameters())
        .map(|k| kernel.derivative(k))
        .collect::<Result<Vec<_>>>()?;

    let mut gap = Vec::new();
    let mut dgap = Vec::new();
    let mut worst_norm_ratio = 0.0f64;
    for level in &ens.levels {
        let k = level.n_samples as f64;
        let mut g = Vec::with_capacity(level.reps());
        let mut dg = Vec::with_capacity(level.reps());
        for r in &level.records {
            let gram_inv = spd_inverse(&r.gram, "Phi'Phi/N")?;
            let s_inv = spd_inverse(&(&p + gram_inv * (r.sigma2_hat / k)), "S_hat")?;
            g.push((&s_inv - &p_inv).norm());
            let sq: f64 = derivatives
                .iter()
                .map(|d| (&p_inv * d * &p_inv - &s_inv * d * &s_inv).norm_squared())
                .sum();
            dg.push(sq.sqrt());
            worst_norm_ratio = worst_norm_ratio.max(s_inv.norm() / p_inv_norm);
        }
        gap.push(mean(&g));
        dgap.push(mean(&dg));
    }
    let scaled = |v: &[f64]| -> Vec<f64> {
        v.iter().zip(&grid).map(|(x, k)| x * k.sqrt()).collect()
    };

    let mut verdicts = vec![
        slope_verdict(
            "shat.gap.slope",
            "mean ||S_hat^-1 - P^-1||_F vs N",
            &grid,
            gap.clone(),
            -1.0,
            tol.shat_slope_halfwidth,
            s,
        ),
        slope_verdict(
            "shat.gap_scaled.slope",
            "sqrt(N) mean ||S_hat^-1 - P^-1||_F vs N",
            &grid,
            scaled(&gap),
            -0.5,
            tol.shat_slope_halfwidth,
            s,
        ),
        slope_verdict(
            "shat.dgap.slope",
            "mean first-derivative gap (Frobenius over all hyperparameters) vs N",
            &grid,
            dgap.clone(),
            -1.0,
            tol.shat_slope_halfwidth,
            s,
        ),
        slope_verdict(
            "shat.dgap_scaled.slope",
            "sqrt(N) mean first-derivative gap vs N",
            &grid,
            scaled(&dgap),
            -0.5,
            tol.shat_slope_halfwidth,
            s,
        ),
    ];
    for (id, description, series, threshold) in [
        ("shat.gap.final", "mean ||S_hat^-1 - P^-1||_F at the largest N", gap.clone(), tol.shat_gap_final),
        ("shat.dgap.final", "mean first-derivative gap at the largest N", dgap.clone(), tol.shat_gap_final),
        (
            "shat.gap_scaled.final",
            "sqrt(N) mean ||S_hat^-1 - P^-1||_F at the largest N",
            scaled(&gap),
            tol.shat_scaled_gap_final,
        ),
        (
            "shat.dgap_scaled.final",
            "sqrt(N) mean first-derivative gap at the largest N",
            scaled(&dgap),
            tol.shat_scaled_gap_final,
        ),
    ] {
        let last = *series.last().unwrap();
        let passed = strictly_decreasing(&series) && last < threshold;
        verdicts.push(Verdict::new(id, description, last, 0.0, threshold, passed, s).with_series(series));
    }
    verdicts.push(Verdict::new(
        "shat.norm_diagnostic",
        "largest ||S_hat^-1||_F / ||P^-1||_F over all replications",
        worst_norm_ratio,
        1.0,
        0.0,
        worst_norm_ratio <= 1.0 + 1e-12,
        s,
    ));
    Ok(verdicts)
}

/// Sample variance of `Φθ₀` over `σ²` against `θ₀ᵀΣθ₀/σ²`.
pub fn check_snr(ens: &Ensemble, limits: &TheoryLimits) -> Result<Vec<Verdict>> {
    let s2 = limits.noise_variance;
    if !(s2 > 0.0) {
        return Err(Error::Precondition("SNR needs a positive noise variance".into()));
    }
    let tol = &ens.config.tolerances;
    let medians: Vec<f64> = ens
        .levels
        .iter()
        .map(|l| median(&l.column(|r| r.signal_variance / s2)))
        .collect();
    let measured = *medians.last().unwrap();
    let target = limits.snr_limit;
    let passed = if target == 0.0 {
        measured == 0.0
    } else {
        (measured - target).abs() <= tol.snr_rel * target
    };
    Ok(vec![Verdict::new(
        "snr",
        "median SNR at the largest N vs theta0' Sigma theta0 / sigma2",
        measured,
        target,
        tol.snr_rel,
        passed,
        seed(ens),
    )
    .with_series(medians)])
}
