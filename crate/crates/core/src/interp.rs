//! Piecewise cubic Hermite interpolation on sorted nodes.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteTable {
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl HermiteTable {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || values.len() != nodes.len() || slopes.len() != nodes.len() {
            return Err(Error::Precondition("Hermite table needs ≥ 2 nodes with matching values and slopes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("Hermite nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes, values, slopes })
    }

    /// Slopes from divided differences: three-point formulas that are exact
    /// for quadratics on nonuniform nodes.
    pub fn from_values(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        if n < 3 {
            return Err(Error::Precondition("need at least 3 nodes to estimate slopes".into()));
        }
        let three_point = |i0: usize, at: usize| -> f64 {
            let (x0, x1, x2) = (nodes[i0], nodes[i0 + 1], nodes[i0 + 2]);
            let (y0, y1, y2) = (values[i0], values[i0 + 1], values[i0 + 2]);
            let x = nodes[at];
            y0 * ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2))
                + y1 * ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2))
                + y2 * ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1))
        };
        let slopes = (0..n).map(|i| three_point(i.clamp(1, n - 2) - 1, i)).collect();
        Self::new(nodes, values, slopes)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    fn locate(&self, x: f64) -> Result<usize> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(Error::Range(format!("{x} lies outside the tabulated range [{lo}, {hi}]")));
        }
        let i = self.nodes.partition_point(|&v| v <= x);
        Ok(i.clamp(1, self.nodes.len() - 1) - 1)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let i = self.locate(x)?;
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let w = x1 - x0;
        let s = (x - x0) / w;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        Ok(h00 * self.values[i] + h10 * w * self.slopes[i] + h01 * self.values[i + 1] + h11 * w * self.slopes[i + 1])
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        let i = self.locate(x)?;
        let (x0, x1) = (self.nodes[i], self.nodes[i + 1]);
        let w = x1 - x0;
        let s = (x - x0) / w;
        let (d00, d10, d01, d11) =
            (6.0 * s * (s - 1.0), (1.0 - s) * (1.0 - 3.0 * s), 6.0 * s * (1.0 - s), s * (3.0 * s - 2.0));
        Ok((d00 * self.values[i] + d01 * self.values[i + 1]) / w + d10 * self.slopes[i] + d11 * self.slopes[i + 1])
    }
}
