//! Seeded Monte Carlo verification of the LS/RLS asymptotics.
//!
//! [`run_ensemble`] draws independent replications on a grid of sample
//! sizes. The `check_*` functions turn an ensemble into pass/fail
//! [`Verdict`]s against the closed-form targets in [`crate::theory`].
//!
//! Almost-sure convergence cannot be observed in finite compute. It is
//! assessed here as a strictly decreasing ensemble median of the normalized
//! deviation along the grid together with a threshold at the largest `N`.

mod checks;
mod ensemble;
mod lemmas;
pub mod stats;

pub use checks::{
    check_as_convergence, check_clt, check_moment_bounds, check_op_rates, check_shat_limits,
    check_snr, shat_norm_diagnostic, NormPair, MIN_CLT_REPS, MIN_GRID_SPAN,
};
pub use ensemble::{replicate, run_ensemble, Ensemble, EnsembleLevel, ReplicationRecord};
pub use lemmas::{
    check_logdet_bounds, check_trace_bounds, cubic_trace_sandwich, logdet_sandwich,
    trace_sandwich, Sandwich,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::KernelSpec;
use crate::signal::ExperimentSetup;
use crate::theory::TheoryLimits;

/// Version of the [`McReport`] JSON layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const CONVERGENCE_NOTE: &str = "almost-sure convergence is operationalized as a strictly \
decreasing ensemble median deviation along the N grid plus a threshold at the largest N";

/// Named tolerance table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Normalized median deviation allowed at the largest `N`.
    pub as_final_rel: f64,
    /// Fraction of replications whose `θ̂` error shrinks from the first to the last `N`.
    pub as_pair_fraction: f64,
    /// Relative Frobenius error for covariance targets.
    pub clt_cov_rel: f64,
    /// Relative Frobenius error for `C_Γ`.
    pub clt_cgamma_rel: f64,
    /// Largest admissible `|mean|/SE` for the zero cross-moments.
    pub cross_moment_z: f64,
    /// Entrywise z-band for the `C_Γ` Monte Carlo estimate.
    pub cgamma_band_z: f64,
    /// KS critical value is `normality_ks_coeff / √reps`.
    pub normality_ks_coeff: f64,
    pub rate_slope_halfwidth: f64,
    pub moment_slope_halfwidth: f64,
    pub moment_ratio_max: f64,
    pub shat_slope_halfwidth: f64,
    pub shat_gap_final: f64,
    pub shat_scaled_gap_final: f64,
    pub snr_rel: f64,
    pub lemma_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            as_final_rel: 0.05,
            as_pair_fraction: 0.95,
            clt_cov_rel: 0.10,
            clt_cgamma_rel: 0.15,
            cross_moment_z: 4.0,
            cgamma_band_z: 3.0,
            normality_ks_coeff: 1.949,
            rate_slope_halfwidth: 0.1,
            moment_slope_halfwidth: 0.15,
            moment_ratio_max: 10.0,
            shat_slope_halfwidth: 0.15,
            shat_gap_final: 0.01,
            shat_scaled_gap_final: 0.1,
            snr_rel: 0.05,
            lemma_slack: 1e-10,
        }
    }
}

/// Monte Carlo experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub setup: ExperimentSetup,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub master_seed: u64,
    pub tolerances: Tolerances,
}

impl McConfig {
    pub fn n(&self) -> usize {
        self.setup.order()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Config("theta0 must be nonempty".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::Config("N grid must be nonempty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("N grid must be strictly increasing".into()));
        }
        if self.n_grid[0] <= n {
            return Err(Error::Config(format!(
                "N > n required: smallest N is {} with n = {n}",
                self.n_grid[0]
            )));
        }
        if self.reps < 2 {
            return Err(Error::Config("at least two replications are required".into()));
        }
        self.setup.innov_u.validate()?;
        self.setup.innov_v.validate()?;
        Ok(())
    }

    pub fn limits(&self) -> Result<TheoryLimits> {
        TheoryLimits::compute(
            &self.setup.filter,
            &self.setup.innov_u,
            &self.setup.innov_v,
            &self.setup.theta0,
        )
    }
}

/// Outcome of one criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub id: String,
    pub description: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    /// Per-`N` values behind the verdict, aligned with the report's grid.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<f64>,
}

impl Verdict {
    pub(crate) fn new(
        id: impl Into<String>,
        description: impl Into<String>,
        measured: f64,
        target: f64,
        tolerance: f64,
        passed: bool,
        seed: u64,
    ) -> Self {
        Self {
            id: id.into(),
            description: description.into(),
            measured,
            target,
            tolerance,
            passed,
            seed,
            stderr: None,
            series: Vec::new(),
        }
    }

    pub(crate) fn with_stderr(mut self, stderr: f64) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub(crate) fn with_series(mut self, series: Vec<f64>) -> Self {
        self.series = series;
        self
    }
}

/// Ensemble means at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub n_samples: usize,
    pub reps: usize,
    /// Row-major mean of `ΦᵀΦ/N`.
    pub mean_gram: Vec<f64>,
    pub mean_cross: Vec<f64>,
    pub mean_noise_power: f64,
    pub mean_theta: Vec<f64>,
    pub mean_sigma2_hat: f64,
    /// Row-major sample covariance of `√N(θ̂ − θ₀)`.
    pub theta_scaled_cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub schema_version: u32,
    pub master_seed: u64,
    pub n: usize,
    pub n_grid: Vec<usize>,
    pub reps: usize,
    pub suites: Vec<String>,
    pub convergence_note: String,
    #[serde(default)]
    pub levels: Vec<LevelSummary>,
    #[serde(default)]
    pub verdicts: Vec<Verdict>,
}

impl McReport {
    pub fn new(config: &McConfig, suites: &[Suite]) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            master_seed: config.master_seed,
            n: config.n(),
            n_grid: config.n_grid.clone(),
            reps: config.reps,
            suites: suites.iter().map(|s| s.name().to_owned()).collect(),
            convergence_note: CONVERGENCE_NOTE.to_owned(),
            levels: Vec::new(),
            verdicts: Vec::new(),
        }
    }

    pub fn summarize(&mut self, ensemble: &Ensemble) {
        self.levels = ensemble.level_summaries();
    }

    pub fn extend(&mut self, verdicts: impl IntoIterator<Item = Verdict>) {
        self.verdicts.extend(verdicts);
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn failures(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| !v.passed).collect()
    }

    /// Plain-text table, one line per verdict.
    pub fn table(&self) -> String {
        let mut out = format!(
            "seed={} n={} N_grid={:?} reps={}\n{}\n",
            self.master_seed, self.n, self.n_grid, self.reps, self.convergence_note
        );
        let width = self.verdicts.iter().map(|v| v.id.len()).max().unwrap_or(8).max(8);
        out.push_str(&format!(
            "{:<width$}  {:>6}  {:>14}  {:>14}  {:>10}\n",
            "criterion", "status", "measured", "target", "tolerance"
        ));
        for v in &self.verdicts {
            out.push_str(&format!(
                "{:<width$}  {:>6}  {:>14.6e}  {:>14.6e}  {:>10.3e}\n",
                v.id,
                if v.passed { "PASS" } else { "FAIL" },
                v.measured,
                v.target,
                v.tolerance
            ));
        }
        out
    }
}

/// Selectable verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    As,
    Clt,
    Rates,
    Moments,
    Shat,
    Lemmas,
    Snr,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::As,
        Suite::Clt,
        Suite::Rates,
        Suite::Moments,
        Suite::Shat,
        Suite::Lemmas,
        Suite::Snr,
    ];

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown suite '{name}'")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::As => "as",
            Suite::Clt => "clt",
            Suite::Rates => "rates",
            Suite::Moments => "moments",
            Suite::Shat => "shat",
            Suite::Lemmas => "lemmas",
            Suite::Snr => "snr",
        }
    }

    fn needs_ensemble(&self) -> bool {
        !matches!(self, Suite::Lemmas)
    }
}

/// Everything `run_verification` needs beyond the Monte Carlo configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationPlan {
    pub config: McConfig,
    pub suites: Vec<Suite>,
    /// Kernel for the `shat` suite.
    pub kernel: Option<KernelSpec>,
    /// Random instances for each lemma checker.
    pub lemma_trials: usize,
}

/// Run the selected suites and collect their verdicts into one report.
pub fn run_verification(plan: &VerificationPlan, workers: usize) -> Result<McReport> {
    if plan.suites.is_empty() {
        return Err(Error::Config("suite selection must be nonempty".into()));
    }
    let cfg = &plan.config;
    cfg.validate()?;
    let mut suites = plan.suites.clone();
    suites.sort();
    suites.dedup();

    if suites.contains(&Suite::Clt) && cfg.reps < MIN_CLT_REPS {
        return Err(Error::InsufficientReplications {
            check: "clt".into(),
            got: cfg.reps,
            required: MIN_CLT_REPS,
        });
    }
    let kernel = if suites.contains(&Suite::Shat) {
        let k = plan
            .kernel
            .clone()
            .ok_or_else(|| Error::Config("the shat suite needs a kernel".into()))?;
        if k.n != cfg.n() {
            return Err(Error::Config("kernel order differs from model order".into()));
        }
        Some(k)
    } else {
        None
    };

    let mut report = McReport::new(cfg, &suites);
    let ensemble = if suites.iter().any(Suite::needs_ensemble) {
        let ens = run_ensemble(cfg, workers)?;
        report.summarize(&ens);
        Some(ens)
    } else {
        None
    };
    let limits = cfg.limits()?;

    for suite in &suites {
        let verdicts = match (suite, &ensemble) {
            (Suite::Lemmas, _) => {
                let slack = cfg.tolerances.lemma_slack;
                let mut v = check_trace_bounds(plan.lemma_trials, cfg.master_seed, slack)?;
                v.extend(check_logdet_bounds(plan.lemma_trials, cfg.master_seed, slack)?);
                v
            }
            (Suite::As, Some(ens)) => check_as_convergence(ens, &limits)?,
            (Suite::Clt, Some(ens)) => check_clt(ens, &limits)?,
            (Suite::Rates, Some(ens)) => check_op_rates(ens, &limits)?,
            (Suite::Moments, Some(ens)) => check_moment_bounds(ens, &limits)?,
            (Suite::Shat, Some(ens)) => {
                check_shat_limits(ens, kernel.as_ref().expect("kernel checked above"))?
            }
            (Suite::Snr, Some(ens)) => check_snr(ens, &limits)?,
            (_, None) => unreachable!("ensemble is built whenever a Monte Carlo suite is selected"),
        };
        report.extend(verdicts);
    }
    Ok(report)
}
