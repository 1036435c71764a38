//! Eigenvalue lists produced by any solver, with JSON and CSV forms.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::linalg::C64;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Eigenvalues in rescaled units (divided by `h^{4/3}`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub schema_version: u32,
    pub method: String,
    pub h: f64,
    pub resolution: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
    /// Quantum numbers of the eigenvalues, when the method assigns them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub indices: Vec<usize>,
    #[serde(skip)]
    pub eigenvectors: Option<DMatrix<C64>>,
}

impl SpectrumResult {
    pub fn new(method: &str, h: f64, resolution: Vec<usize>, eigenvalues: Vec<f64>, residuals: Vec<f64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            method: method.into(),
            h,
            resolution,
            eigenvalues,
            residuals,
            iterations: 0,
            band: None,
            indices: Vec::new(),
            eigenvectors: None,
        }
    }

    pub fn physical(&self, i: usize) -> f64 {
        self.eigenvalues[i] * self.h.powf(4.0 / 3.0)
    }

    /// Eigenvalues at or below `top`.
    pub fn window(&self, top: f64) -> Vec<f64> {
        self.eigenvalues.iter().copied().filter(|&v| v <= top).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue_rescaled,eigenvalue_physical,residual\n");
        for (i, v) in self.eigenvalues.iter().enumerate() {
            let r = self.residuals.get(i).copied().unwrap_or(f64::NAN);
            let _ = writeln!(s, "{},{:.15e},{:.15e},{:.6e}", i + 1, v, self.physical(i), r);
        }
        s
    }

    pub fn from_csv(text: &str, method: &str, h: f64) -> Result<Self> {
        let mut values = Vec::new();
        let mut residuals = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |i: usize| -> Result<f64> {
                cols.get(i)
                    .and_then(|c| c.trim().parse().ok())
                    .ok_or_else(|| Error::Config(format!("malformed spectrum CSV at line {}", n + 1)))
            };
            values.push(parse(1)?);
            residuals.push(parse(3)?);
        }
        Ok(Self::new(method, h, Vec::new(), values, residuals))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectrum serializes")
    }

    /// Reads a spectrum from `.json` or `.csv`.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "csv") {
            return Self::from_csv(&text, "csv", f64::NAN);
        }
        let s: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if s.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("{}: unsupported schema version {}", path.display(), s.schema_version)));
        }
        Ok(s)
    }
}
