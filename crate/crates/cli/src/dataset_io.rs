//! Dataset CSV files and truth sidecars.
//!
//! ```text
//! # n=2 theta0=1,0.5 seed=2024
//! # u_init=<u(1−n),…,u(0)>
//! t,u,y
//! 1,<u(1)>,<y(1)>
//! …
//! N,,<y(N)>
//! ```
//!
//! The `u` column holds `u(t)`; the last row leaves it empty because `Φ`
//! only needs inputs up to `u(N−1)`. Floats use the shortest representation
//! that parses back to the same bits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use firasym::signal::{regressor_matrix, Dataset};

use crate::error::{CliError, CliResult};

/// Observable part of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub n: usize,
    pub theta0: Vec<f64>,
    pub seed: u64,
    /// `u(1−n), …, u(N−1)`.
    pub u: Vec<f64>,
    pub y: DVector<f64>,
}

/// Optional sidecar for test fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub theta0: Vec<f64>,
    pub v: Vec<f64>,
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn to_csv(data: &Dataset, seed: u64) -> String {
    let n = data.n;
    let theta0: Vec<f64> = data.theta0.iter().copied().collect();
    let mut out = format!("# n={n} theta0={} seed={seed}\n", join(&theta0));
    let _ = writeln!(out, "# u_init={}", join(&data.u[..n]));
    out.push_str("t,u,y\n");
    for t in 1..=data.n_samples {
        let u = if t < data.n_samples {
            data.u_at(t as i64).to_string()
        } else {
            String::new()
        };
        let _ = writeln!(out, "{t},{u},{}", data.y[t - 1]);
    }
    out
}

fn parse_f64(field: &str, what: &str) -> CliResult<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("cannot parse {what} '{field}'")))
}

fn parse_list(field: &str, what: &str) -> CliResult<Vec<f64>> {
    if field.trim().is_empty() {
        return Ok(Vec::new());
    }
    field.split(',').map(|x| parse_f64(x, what)).collect()
}

fn header_value<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.trim_start_matches('#')
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix(key)?.strip_prefix('='))
}

pub fn parse_csv(text: &str) -> CliResult<DatasetFile> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    let header = lines
        .next()
        .filter(|l| l.starts_with('#'))
        .ok_or_else(|| CliError::Config("dataset must start with a '# n=… theta0=… seed=…' line".into()))?;
    let missing = |key: &str| CliError::Config(format!("dataset header lacks '{key}='"));
    let n: usize = header_value(header, "n")
        .ok_or_else(|| missing("n"))?
        .parse()
        .map_err(|_| CliError::Config("header n must be a positive integer".into()))?;
    let theta0 = parse_list(header_value(header, "theta0").ok_or_else(|| missing("theta0"))?, "theta0")?;
    let seed: u64 = header_value(header, "seed")
        .ok_or_else(|| missing("seed"))?
        .parse()
        .map_err(|_| CliError::Config("header seed must be an unsigned integer".into()))?;
    if n == 0 || theta0.len() != n {
        return Err(CliError::Config(format!(
            "header n={n} does not match theta0 with {} entries",
            theta0.len()
        )));
    }

    let init_line = lines.next().ok_or_else(|| missing("u_init"))?;
    let u_init = parse_list(header_value(init_line, "u_init").ok_or_else(|| missing("u_init"))?, "u_init")?;
    if u_init.len() != n {
        return Err(CliError::Config(format!("u_init needs n={n} values, got {}", u_init.len())));
    }
    match lines.next() {
        Some(cols) if cols.replace(' ', "") == "t,u,y" => {}
        _ => return Err(CliError::Config("expected column header 't,u,y'".into())),
    }

    let mut u = u_init;
    let mut y = Vec::new();
    let rows: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 3 {
            return Err(CliError::Config(format!("row {}: expected 3 fields, got {}", i + 1, fields.len())));
        }
        let t: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("row {}: bad t '{}'", i + 1, fields[0])))?;
        if t != i + 1 {
            return Err(CliError::Config(format!("row {}: expected t={}, got {t}", i + 1, i + 1)));
        }
        if i + 1 < rows.len() {
            u.push(parse_f64(fields[1], "u")?);
        }
        y.push(parse_f64(fields[2], "y")?);
    }
    if y.len() <= n {
        return Err(CliError::Config(format!("N > n required: N={} with n={n}", y.len())));
    }
    Ok(DatasetFile {
        n,
        theta0,
        seed,
        u,
        y: DVector::from_vec(y),
    })
}

impl DatasetFile {
    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn phi(&self) -> CliResult<DMatrix<f64>> {
        Ok(regressor_matrix(&self.u, self.n, self.n_samples())?)
    }

    /// Rebuild the full dataset with the noise from a truth sidecar.
    pub fn with_truth(&self, truth: &Truth) -> CliResult<Dataset> {
        if truth.v.len() != self.n_samples() || truth.theta0 != self.theta0 {
            return Err(CliError::Config("truth sidecar does not match the dataset".into()));
        }
        Ok(Dataset {
            n: self.n,
            n_samples: self.n_samples(),
            u: self.u.clone(),
            v: DVector::from_column_slice(&truth.v),
            y: self.y.clone(),
            phi: self.phi()?,
            theta0: DVector::from_column_slice(&self.theta0),
        })
    }
}

pub fn truth_of(data: &Dataset) -> Truth {
    Truth {
        theta0: data.theta0.iter().copied().collect(),
        v: data.v.iter().copied().collect(),
    }
}

pub fn read_dataset(path: &Path) -> CliResult<DatasetFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io_at("read dataset", path, e))?;
    parse_csv(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_truth(path: &Path) -> CliResult<Truth> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io_at("read truth file", path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Sidecar path next to a dataset: `x.csv` becomes `x.truth.json`.
pub fn truth_path(dataset: &Path) -> std::path::PathBuf {
    dataset.with_extension("truth.json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use firasym::signal::simulate_fir;

    #[test]
    fn hand_file_parses() {
        let text = "# n=1 theta0=1 seed=0\n# u_init=1\nt,u,y\n1,1,0\n2,1,1\n3,,2\n";
        let f = parse_csv(text).unwrap();
        assert_eq!(f.u, vec![1.0, 1.0, 1.0]);
        assert_eq!(f.phi().unwrap(), DMatrix::from_element(3, 1, 1.0));
        assert_eq!(f.y, DVector::from_vec(vec![0.0, 1.0, 2.0]));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let u = vec![0.1, -1.0 / 3.0, 2.5e-17, 7.0, -0.2, 1e10];
        let v = vec![1e-300, 0.3, -0.7, 0.1];
        let data = simulate_fir(&[0.9, -1.1, 0.4], &u, &v).unwrap();
        let text = to_csv(&data, 42);
        let back = parse_csv(&text).unwrap().with_truth(&truth_of(&data)).unwrap();
        assert_eq!(back, data);
        assert_eq!(to_csv(&back, 42), text);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(parse_csv("t,u,y\n1,1,1\n").is_err());
        assert!(parse_csv("# n=2 theta0=1 seed=0\n# u_init=0,0\nt,u,y\n").is_err());
        let short = parse_csv("# n=1 theta0=1 seed=0\n# u_init=1\nt,u,y\n1,,2\n").unwrap_err();
        assert!(short.to_string().contains("N > n required"));
        assert!(parse_csv("# n=1 theta0=1 seed=0\n# u_init=1\nt,u,y\n1,1,x\n2,,1\n").is_err());
    }
}
