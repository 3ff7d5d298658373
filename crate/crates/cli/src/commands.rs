//! The four subcommands as library functions returning values; `main` prints.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use firasym::estimators::{ls_estimate, noise_variance_estimate, rls_estimate};
use firasym::rng::ReplicationSeeds;
use firasym::theory::sigma_matrix;
use firasym::verify::stats::variance;
use firasym::verify::{run_verification, McReport};

use crate::config::RunManifest;
use crate::dataset_io::{read_dataset, to_csv, truth_of, truth_path};
use crate::error::{CliError, CliResult};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const ESTIMATE_JSON: &str = "estimate.json";

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io_at("write", path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// One written dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedFile {
    pub path: PathBuf,
    pub n: usize,
    pub n_samples: usize,
    pub replication: u64,
    /// Sample variance of the noise-free output over the configured `σ²`.
    pub snr: f64,
}

/// Write `replications` datasets of size `N`, one CSV each.
///
/// A single replication is written as `dataset.csv`; otherwise files are
/// named `dataset_r<rep>.csv`.
pub fn simulate(m: &RunManifest) -> CliResult<Vec<SimulatedFile>> {
    let setup = m.config.setup()?;
    let sim = &m.config.simulate;
    let n = setup.order();
    if sim.n_samples <= n {
        return Err(CliError::Config(format!(
            "N > n required: N={} with n={n}",
            sim.n_samples
        )));
    }
    if sim.replications == 0 {
        return Err(CliError::Config("replications must be positive".into()));
    }
    m.prepare_out_dir()?;
    let mut written = Vec::with_capacity(sim.replications);
    for rep in 0..sim.replications as u64 {
        let seeds = ReplicationSeeds::derive(m.master_seed, sim.n_samples, rep);
        let data = setup.generate(sim.n_samples, seeds)?;
        let name = if sim.replications == 1 {
            "dataset.csv".to_owned()
        } else {
            format!("dataset_r{rep}.csv")
        };
        let path = m.out_dir.join(name);
        write_file(&path, &to_csv(&data, m.master_seed))?;
        if sim.write_truth {
            write_file(&truth_path(&path), &to_json(&truth_of(&data)))?;
        }
        let clean: Vec<f64> = (&data.phi * &data.theta0).iter().copied().collect();
        written.push(SimulatedFile {
            path,
            n,
            n_samples: sim.n_samples,
            replication: rep,
            snr: variance(&clean) / setup.innov_v.variance,
        });
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub family: String,
    pub eta: Vec<f64>,
    pub theta_tr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub dataset: String,
    pub n: usize,
    pub n_samples: usize,
    /// `θ₀` recorded in the dataset header.
    pub theta0_header: Vec<f64>,
    pub theta_ls: Vec<f64>,
    pub sigma2_hat: f64,
    /// `√(σ̂² [Σ⁻¹]_ii / N)` from the configured filter preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotic_se: Option<Vec<f64>>,
    /// Noise variance plugged into the regularized estimates.
    pub rls_sigma2: f64,
    pub regularized: Vec<KernelEstimate>,
}

/// LS, `σ̂²` and one regularized estimate per configured kernel.
pub fn estimate(m: &RunManifest, dataset: &Path) -> CliResult<EstimateReport> {
    let file = read_dataset(dataset)?;
    if m.config_path.is_some() && m.config.n() != file.n {
        return Err(CliError::Config(format!(
            "config theta0 has n={} but the dataset has n={}",
            m.config.n(),
            file.n
        )));
    }
    let phi = file.phi()?;
    let theta = ls_estimate(&phi, &file.y)?;
    let sigma2_hat = noise_variance_estimate(&file.y, &phi, &theta)?;
    let n_samples = file.n_samples();

    let asymptotic_se = match &m.config_path {
        Some(_) => {
            let sigma = sigma_matrix(&m.config.filter.build()?, m.config.innov_u.build()?.variance, file.n)?;
            let sigma_inv = firasym::linalg::spd_inverse(&sigma, "Sigma")?;
            Some(
                (0..file.n)
                    .map(|i| (sigma2_hat * sigma_inv[(i, i)] / n_samples as f64).sqrt())
                    .collect(),
            )
        }
        None => None,
    };

    let rls_sigma2 = m.config.rls_sigma2.fixed()?.unwrap_or(sigma2_hat);
    let mut regularized = Vec::new();
    for kernel in m.config.kernels.iter() {
        let spec = kernel.build(file.n)?;
        let fit = rls_estimate(&phi, &file.y, &spec.matrix(), rls_sigma2)?;
        regularized.push(KernelEstimate {
            family: spec.family.name().to_owned(),
            eta: spec.eta.clone(),
            theta_tr: fit.theta_tr.iter().copied().collect(),
        });
    }
    Ok(EstimateReport {
        dataset: dataset.display().to_string(),
        n: file.n,
        n_samples,
        theta0_header: file.theta0.clone(),
        theta_ls: collect(&theta),
        sigma2_hat,
        asymptotic_se,
        rls_sigma2,
        regularized,
    })
}

fn collect(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn estimate_json(report: &EstimateReport) -> String {
    to_json(report)
}

pub fn write_estimate(m: &RunManifest, report: &EstimateReport) -> CliResult<PathBuf> {
    m.prepare_out_dir()?;
    let path = m.out_dir.join(ESTIMATE_JSON);
    write_file(&path, &to_json(report))?;
    Ok(path)
}

pub fn report_json(report: &McReport) -> String {
    to_json(report)
}

/// Run the selected suites and write `report.json` and `report.txt`.
pub fn verify(m: &RunManifest) -> CliResult<McReport> {
    let plan = m.plan()?;
    m.prepare_out_dir()?;
    let report = run_verification(&plan, m.workers)?;
    write_file(&m.out_dir.join(REPORT_JSON), &report_json(&report))?;
    write_file(&m.out_dir.join(REPORT_TXT), &report.table())?;
    Ok(report)
}

/// Load a report written by `verify`; a directory means its `report.json`.
pub fn load_report(path: &Path) -> CliResult<McReport> {
    let file = if path.is_dir() {
        path.join(REPORT_JSON)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| CliError::io_at("read report", &file, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))
}
