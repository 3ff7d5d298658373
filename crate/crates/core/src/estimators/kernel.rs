//! Kernel matrices `P(η)` and their analytic hyperparameter derivatives.
//!
//! With 1-based indices `i, j`:
//!
//! | family | η | `P_ij` |
//! |---|---|---|
//! | ridge | `[η]` | `η δ_ij` |
//! | DC | `[c, λ, ρ]` | `c ρ^{|i−j|} λ^{(i+j)/2}` |
//! | TC | `[c, λ]` | `c λ^{max(i,j)}` |
//!
//! TC coincides with DC at `ρ = √λ`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Ridge,
    DiagonalCorrelated,
    TunedCorrelated,
}

impl KernelFamily {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "ridge" => Ok(Self::Ridge),
            "dc" => Ok(Self::DiagonalCorrelated),
            "tc" => Ok(Self::TunedCorrelated),
            other => Err(Error::Config(format!("unknown kernel family '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Ridge => "ridge",
            Self::DiagonalCorrelated => "dc",
            Self::TunedCorrelated => "tc",
        }
    }

    /// Number of hyperparameters `p`.
    pub fn num_hyperparameters(&self) -> usize {
        match self {
            Self::Ridge => 1,
            Self::DiagonalCorrelated => 3,
            Self::TunedCorrelated => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub eta: Vec<f64>,
    pub n: usize,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, eta: Vec<f64>, n: usize) -> Result<Self> {
        let spec = Self { family, eta, n };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ridge(eta: f64, n: usize) -> Result<Self> {
        Self::new(KernelFamily::Ridge, vec![eta], n)
    }

    pub fn dc(c: f64, lambda: f64, rho: f64, n: usize) -> Result<Self> {
        Self::new(KernelFamily::DiagonalCorrelated, vec![c, lambda, rho], n)
    }

    pub fn tc(c: f64, lambda: f64, n: usize) -> Result<Self> {
        Self::new(KernelFamily::TunedCorrelated, vec![c, lambda], n)
    }

    /// Same family and order at a different hyperparameter.
    pub fn with_eta(&self, eta: Vec<f64>) -> Result<Self> {
        Self::new(self.family, eta, self.n)
    }

    pub fn num_hyperparameters(&self) -> usize {
        self.family.num_hyperparameters()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("kernel order must be positive".into()));
        }
        let p = self.family.num_hyperparameters();
        if self.eta.len() != p {
            return Err(Error::Config(format!(
                "{} kernel takes {p} hyperparameters, got {}",
                self.family.name(),
                self.eta.len()
            )));
        }
        if self.eta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("kernel hyperparameters must be finite".into()));
        }
        let ok = match self.family {
            KernelFamily::Ridge => self.eta[0] > 0.0,
            KernelFamily::DiagonalCorrelated => {
                self.eta[0] > 0.0
                    && self.eta[1] > 0.0
                    && self.eta[1] < 1.0
                    && self.eta[2].abs() <= 1.0
            }
            KernelFamily::TunedCorrelated => {
                self.eta[0] > 0.0 && self.eta[1] > 0.0 && self.eta[1] < 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "hyperparameters {:?} outside the {} domain",
                self.eta,
                self.family.name()
            )))
        }
    }

    /// Whether η lies strictly inside the domain, where `P` is positive
    /// definite and differentiable.
    pub fn is_interior(&self) -> bool {
        match self.family {
            KernelFamily::DiagonalCorrelated => self.eta[2].abs() < 1.0,
            _ => true,
        }
    }

    fn require_interior(&self) -> Result<()> {
        if self.is_interior() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "hyperparameters {:?} lie on the {} domain boundary",
                self.eta,
                self.family.name()
            )))
        }
    }

    fn check_index(&self, k: usize) -> Result<()> {
        let p = self.num_hyperparameters();
        if k >= p {
            return Err(Error::Precondition(format!(
                "hyperparameter index {k} out of range for {} kernel (p = {p})",
                self.family.name()
            )));
        }
        Ok(())
    }

    fn fill(&self, entry: impl Fn(f64, f64) -> f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |r, c| entry((r + 1) as f64, (c + 1) as f64))
    }

    /// `P(η)`.
    pub fn matrix(&self) -> DMatrix<f64> {
        match self.family {
            KernelFamily::Ridge => DMatrix::identity(self.n, self.n) * self.eta[0],
            KernelFamily::DiagonalCorrelated => {
                let (c, lambda, rho) = (self.eta[0], self.eta[1], self.eta[2]);
                self.fill(|i, j| c * rho.powi((i - j).abs() as i32) * lambda.powf((i + j) / 2.0))
            }
            KernelFamily::TunedCorrelated => {
                let (c, lambda) = (self.eta[0], self.eta[1]);
                self.fill(|i, j| c * lambda.powf(i.max(j)))
            }
        }
    }

    /// `∂P/∂η_k` (0-based `k`).
    pub fn derivative(&self, k: usize) -> Result<DMatrix<f64>> {
        self.check_index(k)?;
        self.require_interior()?;
        let n = self.n;
        Ok(match self.family {
            KernelFamily::Ridge => DMatrix::identity(n, n),
            KernelFamily::DiagonalCorrelated => {
                let (c, lambda, rho) = (self.eta[0], self.eta[1], self.eta[2]);
                match k {
                    0 => self.fill(|i, j| rho.powi((i - j).abs() as i32) * lambda.powf((i + j) / 2.0)),
                    1 => self.fill(|i, j| {
                        let s = (i + j) / 2.0;
                        c * rho.powi((i - j).abs() as i32) * s * lambda.powf(s - 1.0)
                    }),
                    _ => self.fill(|i, j| {
                        let m = (i - j).abs() as i32;
                        if m == 0 {
                            0.0
                        } else {
                            c * f64::from(m) * rho.powi(m - 1) * lambda.powf((i + j) / 2.0)
                        }
                    }),
                }
            }
            KernelFamily::TunedCorrelated => {
                let (c, lambda) = (self.eta[0], self.eta[1]);
                match k {
                    0 => self.fill(|i, j| lambda.powf(i.max(j))),
                    _ => self.fill(|i, j| {
                        let m = i.max(j);
                        c * m * lambda.powf(m - 1.0)
                    }),
                }
            }
        })
    }

    /// `∂²P/∂η_k∂η_l` (0-based indices).
    pub fn second_derivative(&self, k: usize, l: usize) -> Result<DMatrix<f64>> {
        self.check_index(k)?;
        self.check_index(l)?;
        self.require_interior()?;
        let n = self.n;
        let (k, l) = (k.min(l), k.max(l));
        Ok(match self.family {
            KernelFamily::Ridge => DMatrix::zeros(n, n),
            KernelFamily::DiagonalCorrelated => {
                let (c, lambda, rho) = (self.eta[0], self.eta[1], self.eta[2]);
                let rho_pow = |m: i32, d: i32| -> f64 {
                    // d-th derivative of ρ^m
                    let coef: f64 = (0..d).map(|q| f64::from(m - q)).product();
                    if m < d {
                        0.0
                    } else {
                        coef * rho.powi(m - d)
                    }
                };
                let lam_pow = |s: f64, d: i32| -> f64 {
                    let coef: f64 = (0..d).map(|q| s - f64::from(q)).product();
                    coef * lambda.powf(s - f64::from(d))
                };
                let (dc, dl, dr) = match (k, l) {
                    (0, 0) => return Ok(DMatrix::zeros(n, n)),
                    (0, 1) => (1, 1, 0),
                    (0, 2) => (1, 0, 1),
                    (1, 1) => (0, 2, 0),
                    (1, 2) => (0, 1, 1),
                    _ => (0, 0, 2),
                };
                let scale = if dc == 1 { 1.0 } else { c };
                self.fill(|i, j| {
                    let m = (i - j).abs() as i32;
                    scale * rho_pow(m, dr) * lam_pow((i + j) / 2.0, dl)
                })
            }
            KernelFamily::TunedCorrelated => {
                let (c, lambda) = (self.eta[0], self.eta[1]);
                match (k, l) {
                    (0, 0) => DMatrix::zeros(n, n),
                    (0, 1) => self.fill(|i, j| {
                        let m = i.max(j);
                        m * lambda.powf(m - 1.0)
                    }),
                    _ => self.fill(|i, j| {
                        let m = i.max(j);
                        c * m * (m - 1.0) * lambda.powf(m - 2.0)
                    }),
                }
            }
        })
    }
}

/// Materialize `P(η)` after validating the hyperparameters.
pub fn kernel_matrix(spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    Ok(spec.matrix())
}
