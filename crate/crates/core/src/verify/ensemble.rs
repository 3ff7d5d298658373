//! Replication harness: one record per `(N, replication)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::stats::{compensated_sum, covariance, mean, mean_vector};
use super::{LevelSummary, McConfig};
use crate::error::{Error, Result};
use crate::estimators::{ls_estimate, noise_variance_estimate};
use crate::rng::ReplicationSeeds;
use crate::signal::ExperimentSetup;

/// Per-replication statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    /// `ΦᵀΦ/N`.
    pub gram: DMatrix<f64>,
    /// `ΦᵀV/N`.
    pub cross: DVector<f64>,
    /// `VᵀV/N`.
    pub noise_power: f64,
    pub theta_ls: DVector<f64>,
    pub sigma2_hat: f64,
    /// Sample variance (mean removed, `1/(N−1)`) of the noise-free output `Φθ₀`.
    pub signal_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleLevel {
    pub n_samples: usize,
    pub records: Vec<ReplicationRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub config: McConfig,
    pub levels: Vec<EnsembleLevel>,
}

/// Draw and reduce a single replication.
pub fn replicate(
    setup: &ExperimentSetup,
    master_seed: u64,
    n_samples: usize,
    rep: usize,
) -> Result<ReplicationRecord> {
    let seeds = ReplicationSeeds::derive(master_seed, n_samples, rep as u64);
    let data = setup.generate(n_samples, seeds)?;
    let scale = n_samples as f64;
    let gram = data.phi.tr_mul(&data.phi) / scale;
    let cross = data.phi.tr_mul(&data.v) / scale;
    let noise_power = data.v.norm_squared() / scale;
    let theta_ls = ls_estimate(&data.phi, &data.y)?;
    let sigma2_hat = noise_variance_estimate(&data.y, &data.phi, &theta_ls)?;
    let clean: Vec<f64> = (&data.phi * &data.theta0).iter().copied().collect();
    let centre = mean(&clean);
    let signal_variance = compensated_sum(clean.iter().map(|x| (x - centre) * (x - centre)))
        / (n_samples - 1) as f64;
    Ok(ReplicationRecord {
        gram,
        cross,
        noise_power,
        theta_ls,
        sigma2_hat,
        signal_variance,
    })
}

/// Run every `(N, replication)` pair of `cfg` on a pool of `workers` threads.
///
/// Records are stored in replication order, so the result does not depend
/// on the worker count.
pub fn run_ensemble(cfg: &McConfig, workers: usize) -> Result<Ensemble> {
    cfg.validate()?;
    if workers == 0 {
        return Err(Error::Config("worker count must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::WorkerPool(e.to_string()))?;
    let levels = pool.install(|| {
        cfg.n_grid
            .iter()
            .map(|&n_samples| {
                let records = (0..cfg.reps)
                    .into_par_iter()
                    .map(|rep| {
                        replicate(&cfg.setup, cfg.master_seed, n_samples, rep).map_err(|e| {
                            Error::Replication {
                                n_samples,
                                rep,
                                source: Box::new(e),
                            }
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(EnsembleLevel { n_samples, records })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(Ensemble {
        config: cfg.clone(),
        levels,
    })
}

impl EnsembleLevel {
    pub fn reps(&self) -> usize {
        self.records.len()
    }

    pub fn column<F: Fn(&ReplicationRecord) -> f64>(&self, f: F) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }

    pub fn vectors<F: Fn(&ReplicationRecord) -> DVector<f64>>(&self, f: F) -> Vec<DVector<f64>> {
        self.records.iter().map(f).collect()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

impl Ensemble {
    pub fn n_grid(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.n_samples).collect()
    }

    pub fn largest(&self) -> &EnsembleLevel {
        self.levels.last().expect("ensemble has at least one level")
    }

    pub fn level_summaries(&self) -> Vec<LevelSummary> {
        let theta0 = DVector::from_column_slice(&self.config.setup.theta0);
        self.levels
            .iter()
            .map(|level| {
                let n = theta0.len();
                let root_n = (level.n_samples as f64).sqrt();
                let grams = level.vectors(|r| DVector::from_column_slice(r.gram.as_slice()));
                let mean_gram = DMatrix::from_column_slice(n, n, mean_vector(&grams).as_slice());
                let scaled = level.vectors(|r| (&r.theta_ls - &theta0) * root_n);
                LevelSummary {
                    n_samples: level.n_samples,
                    reps: level.reps(),
                    mean_gram: row_major(&mean_gram),
                    mean_cross: mean_vector(&level.vectors(|r| r.cross.clone()))
                        .iter()
                        .copied()
                        .collect(),
                    mean_noise_power: mean(&level.column(|r| r.noise_power)),
                    mean_theta: mean_vector(&level.vectors(|r| r.theta_ls.clone()))
                        .iter()
                        .copied()
                        .collect(),
                    mean_sigma2_hat: mean(&level.column(|r| r.sigma2_hat)),
                    theta_scaled_cov: row_major(&covariance(&scaled)),
                }
            })
            .collect()
    }
}
