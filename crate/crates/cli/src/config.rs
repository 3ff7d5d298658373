//! JSON experiment configuration and the resolved run manifest.
//!
//! Every field has a default, so `{}` is the built-in preset: AR(1) input
//! with `a = 0.5`, `θ₀ = [1, 0.5, 0.25]`, unit-variance gaussian innovations
//! and noise. Unknown fields are ignored.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use firasym::estimators::{KernelFamily, KernelSpec};
use firasym::signal::{ExperimentSetup, FilterSpec, InnovationFamily, InnovationSpec};
use firasym::verify::{McConfig, Suite, Tolerances, VerificationPlan};

use crate::error::{CliError, CliResult};

/// Named input filters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum FilterPreset {
    White,
    Ar1 { a: f64 },
    Fir2 { h0: f64, h1: f64 },
    Fir { coeffs: Vec<f64> },
}

impl FilterPreset {
    pub fn build(&self) -> CliResult<FilterSpec> {
        Ok(match self {
            FilterPreset::White => FilterSpec::white(),
            FilterPreset::Ar1 { a } => FilterSpec::ar1(*a)?,
            FilterPreset::Fir2 { h0, h1 } => FilterSpec::fir(vec![*h0, *h1])?,
            FilterPreset::Fir { coeffs } => FilterSpec::fir(coeffs.clone())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationConfig {
    /// `gaussian`, `uniform` or `rademacher_mixture`.
    pub family: String,
    #[serde(default = "unit")]
    pub variance: f64,
    /// Rademacher share for `rademacher_mixture`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

impl Default for InnovationConfig {
    fn default() -> Self {
        Self {
            family: "gaussian".into(),
            variance: 1.0,
            weight: None,
        }
    }
}

impl InnovationConfig {
    pub fn build(&self) -> CliResult<InnovationSpec> {
        let family = InnovationFamily::from_name(&self.family, self.weight)?;
        Ok(InnovationSpec::new(family, self.variance)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// `ridge`, `dc` or `tc`.
    pub family: String,
    /// `[η]`, `[c, λ, ρ]` or `[c, λ]`.
    pub eta: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            family: "ridge".into(),
            eta: vec![1.0],
        }
    }
}

impl KernelConfig {
    pub fn build(&self, n: usize) -> CliResult<KernelSpec> {
        Ok(KernelSpec::new(KernelFamily::from_name(&self.family)?, self.eta.clone(), n)?)
    }
}

/// Noise variance used by the regularized estimator: `"estimated"` or a number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseVarianceChoice {
    Fixed(f64),
    Named(String),
}

impl Default for NoiseVarianceChoice {
    fn default() -> Self {
        NoiseVarianceChoice::Named("estimated".into())
    }
}

impl NoiseVarianceChoice {
    /// `Some(σ²)` for a fixed value, `None` to plug in `σ̂²`.
    pub fn fixed(&self) -> CliResult<Option<f64>> {
        match self {
            NoiseVarianceChoice::Fixed(s) if *s >= 0.0 => Ok(Some(*s)),
            NoiseVarianceChoice::Fixed(s) => {
                Err(CliError::Config(format!("rls_sigma2 must be nonnegative, got {s}")))
            }
            NoiseVarianceChoice::Named(name) if name == "estimated" => Ok(None),
            NoiseVarianceChoice::Named(name) => Err(CliError::Config(format!(
                "rls_sigma2 must be \"estimated\" or a number, got \"{name}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub n_samples: usize,
    pub replications: usize,
    /// Also write a `.truth.json` sidecar with `v` and `θ₀`.
    pub write_truth: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            replications: 1,
            write_truth: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyConfig {
    pub n_grid: Vec<usize>,
    pub reps: usize,
    /// Kernel for the `shat` suite.
    pub kernel: KernelConfig,
    pub lemma_trials: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![100, 400, 1600, 6400],
            reps: 500,
            kernel: KernelConfig::default(),
            lemma_trials: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub theta0: Vec<f64>,
    pub filter: FilterPreset,
    pub innov_u: InnovationConfig,
    pub innov_v: InnovationConfig,
    pub seed: u64,
    pub workers: usize,
    pub suites: Vec<String>,
    pub simulate: SimulateConfig,
    pub verify: VerifyConfig,
    /// Kernels evaluated by `estimate`.
    pub kernels: Vec<KernelConfig>,
    pub rls_sigma2: NoiseVarianceChoice,
    pub tolerances: Tolerances,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            theta0: vec![1.0, 0.5, 0.25],
            filter: FilterPreset::Ar1 { a: 0.5 },
            innov_u: InnovationConfig::default(),
            innov_v: InnovationConfig::default(),
            seed: 2024,
            workers: 1,
            suites: Suite::ALL.iter().map(|s| s.name().to_owned()).collect(),
            simulate: SimulateConfig::default(),
            verify: VerifyConfig::default(),
            kernels: vec![KernelConfig::default()],
            rls_sigma2: NoiseVarianceChoice::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io_at("read config", path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn n(&self) -> usize {
        self.theta0.len()
    }

    pub fn setup(&self) -> CliResult<ExperimentSetup> {
        if self.theta0.is_empty() {
            return Err(CliError::Config("theta0 must be nonempty".into()));
        }
        Ok(ExperimentSetup {
            filter: self.filter.build()?,
            innov_u: self.innov_u.build()?,
            innov_v: self.innov_v.build()?,
            theta0: self.theta0.clone(),
        })
    }

    pub fn kernels(&self) -> CliResult<Vec<KernelSpec>> {
        self.kernels.iter().map(|k| k.build(self.n())).collect()
    }
}

pub fn parse_suites(list: &str) -> CliResult<Vec<Suite>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| Suite::from_name(s).map_err(|_| CliError::Config(format!("unknown suite '{s}'"))))
        .collect()
}

/// Command-line overrides on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub suites: Option<String>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// A fully resolved invocation.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: Config,
    pub config_path: Option<PathBuf>,
    pub master_seed: u64,
    pub suites: Vec<Suite>,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl RunManifest {
    pub fn resolve(overrides: Overrides) -> CliResult<Self> {
        let config = match &overrides.config_path {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        let suites = match &overrides.suites {
            Some(list) => parse_suites(list)?,
            None => parse_suites(&config.suites.join(","))?,
        };
        if suites.is_empty() {
            return Err(CliError::Config("suite selection must be nonempty".into()));
        }
        let workers = overrides.workers.unwrap_or(config.workers);
        if workers == 0 {
            return Err(CliError::Config("worker count must be positive".into()));
        }
        Ok(Self {
            master_seed: overrides.seed.unwrap_or(config.seed),
            out_dir: overrides.out_dir.unwrap_or_else(|| PathBuf::from(".")),
            config_path: overrides.config_path,
            config,
            suites,
            workers,
        })
    }

    /// Create the output directory and confirm it accepts files.
    pub fn prepare_out_dir(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io_at("create", &self.out_dir, e))?;
        let meta = fs::metadata(&self.out_dir).map_err(|e| CliError::io_at("inspect", &self.out_dir, e))?;
        if meta.permissions().readonly() {
            return Err(CliError::io_at(
                "write to",
                &self.out_dir,
                std::io::Error::new(std::io::ErrorKind::PermissionDenied, "directory is read-only"),
            ));
        }
        Ok(())
    }

    pub fn mc_config(&self) -> CliResult<McConfig> {
        let v = &self.config.verify;
        Ok(McConfig {
            setup: self.config.setup()?,
            n_grid: v.n_grid.clone(),
            reps: v.reps,
            master_seed: self.master_seed,
            tolerances: self.config.tolerances.clone(),
        })
    }

    pub fn plan(&self) -> CliResult<VerificationPlan> {
        let kernel = if self.suites.contains(&Suite::Shat) {
            Some(self.config.verify.kernel.build(self.config.n())?)
        } else {
            None
        };
        Ok(VerificationPlan {
            config: self.mc_config()?,
            suites: self.suites.clone(),
            kernel,
            lemma_trials: self.config.verify.lemma_trials,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default_preset() {
        assert_eq!(Config::from_json("{}").unwrap(), Config::default());
    }

    #[test]
    fn presets_and_unknown_fields() {
        let c = Config::from_json(
            r#"{"filter": {"preset": "fir2", "h0": 1, "h1": 0.5}, "future_field": 3,
                "innov_u": {"family": "rademacher_mixture", "weight": 0.5},
                "rls_sigma2": 0.25, "tolerances": {"snr_rel": 0.5}}"#,
        )
        .unwrap();
        assert_eq!(c.filter.build().unwrap().coeffs(), &[1.0, 0.5]);
        assert_eq!(c.innov_u.build().unwrap().kurtosis(), 2.5);
        assert_eq!(c.rls_sigma2.fixed().unwrap(), Some(0.25));
        assert_eq!(c.tolerances.snr_rel, 0.5);
        assert_eq!(c.tolerances.clt_cov_rel, Tolerances::default().clt_cov_rel);
    }

    #[test]
    fn bad_values_are_config_errors() {
        let c = Config::from_json(r#"{"filter": {"preset": "ar1", "a": 1.5}}"#).unwrap();
        assert_eq!(c.setup().unwrap_err().exit_code(), crate::error::EXIT_CONFIG);
        assert!(Config::from_json(r#"{"filter": {"preset": "bogus"}}"#).is_err());
        let named = NoiseVarianceChoice::Named("guess".into());
        assert!(named.fixed().is_err());
        assert!(parse_suites("as,nope").is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let m = RunManifest::resolve(Overrides {
            seed: Some(7),
            suites: Some("lemmas, snr".into()),
            workers: Some(3),
            ..Overrides::default()
        })
        .unwrap();
        assert_eq!((m.master_seed, m.workers), (7, 3));
        assert_eq!(m.suites, vec![Suite::Lemmas, Suite::Snr]);
        assert!(RunManifest::resolve(Overrides {
            suites: Some(" ,".into()),
            ..Overrides::default()
        })
        .is_err());
    }
}
