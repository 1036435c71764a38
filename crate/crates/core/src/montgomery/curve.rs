use serde::{Deserialize, Serialize};

use super::{band_point, BandPoint, MontgomeryGrid};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersiveCurveTable {
    pub schema_version: u32,
    pub band: usize,
    pub nu_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Hellmann–Feynman slopes `∂_ν μ` at the nodes.
    pub slopes: Vec<f64>,
    /// Centered second differences divided by the squared step; the end
    /// entries repeat their neighbors.
    pub second_differences: Vec<f64>,
    /// Values rise moving outward over the last 10 samples on each side.
    pub tails_increase: bool,
}

impl DispersiveCurveTable {
    /// Indices of strict interior local minima.
    pub fn local_minima(&self) -> Vec<usize> {
        (1..self.values.len().saturating_sub(1))
            .filter(|&i| self.values[i] < self.values[i - 1] && self.values[i] < self.values[i + 1])
            .collect()
    }

    /// Number of sign changes of the first difference.
    pub fn first_difference_sign_changes(&self) -> usize {
        let d: Vec<f64> = self.values.windows(2).map(|w| w[1] - w[0]).collect();
        d.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
    }
}

/// Samples band `k` on `samples` uniform points of `[nu_lo, nu_hi]`.
pub fn dispersive_curve(k: usize, nu_lo: f64, nu_hi: f64, samples: usize, grid: &MontgomeryGrid) -> Result<DispersiveCurveTable> {
    if !(nu_lo < nu_hi) {
        return Err(Error::Precondition(format!("empty parameter range [{nu_lo}, {nu_hi}]")));
    }
    if samples < 9 {
        return Err(Error::Precondition(format!("need at least 9 samples, got {samples}")));
    }
    let step = (nu_hi - nu_lo) / (samples - 1) as f64;
    let nu_grid: Vec<f64> = (0..samples).map(|i| if i + 1 == samples { nu_hi } else { nu_lo + i as f64 * step }).collect();
    let points = evaluate_many(k, &nu_grid, grid)?;
    let values: Vec<f64> = points.iter().map(|p| p.value).collect();
    let slopes: Vec<f64> = points.iter().map(|p| p.slope).collect();
    if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Diagnostic(format!("band {k} value {} at ν = {} is not finite and positive", values[i], nu_grid[i])));
    }
    let mut second = vec![0.0; samples];
    for i in 1..samples - 1 {
        second[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (step * step);
    }
    second[0] = second[1];
    second[samples - 1] = second[samples - 2];
    let tail = 10.min(samples - 1);
    let left = (0..tail).all(|i| values[i] > values[i + 1]);
    let right = (samples - 1 - tail..samples - 1).all(|i| values[i + 1] > values[i]);
    Ok(DispersiveCurveTable {
        schema_version: SCHEMA_VERSION,
        band: k,
        nu_grid,
        values,
        slopes,
        second_differences: second,
        tails_increase: left && right,
    })
}

/// Band values at many parameters; parallel when enabled, order-independent.
pub(crate) fn evaluate_many(k: usize, nus: &[f64], grid: &MontgomeryGrid) -> Result<Vec<BandPoint>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        nus.par_iter().map(|&nu| band_point(k, nu, grid)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        nus.iter().map(|&nu| band_point(k, nu, grid)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointData {
    pub band: usize,
    pub nu_c: f64,
    pub mu_c: f64,
    pub curvature: f64,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const CURVATURE_STEP: f64 = 1e-3;

/// Minimizes band `k` inside `bracket` (either orientation).
///
/// Golden-section search narrows the bracket, then Newton steps on the
/// Hellmann–Feynman slope pin the minimizer well below the resolution that
/// function values alone allow near a flat minimum.
pub fn find_critical_point(k: usize, bracket: (f64, f64), grid: &MontgomeryGrid) -> Result<CriticalPointData> {
    let (mut a, mut b) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    if !(a < b) {
        return Err(Error::Bracketing(format!("empty bracket ({}, {})", bracket.0, bracket.1)));
    }
    let f = |nu: f64| band_point(k, nu, grid);
    let (fa, fb) = (f(a)?, f(b)?);
    if !(fa.slope < 0.0 && fb.slope > 0.0) {
        return Err(Error::Bracketing(format!(
            "band {k}: slope does not change sign from negative to positive on [{a}, {b}] (slopes {:.3e}, {:.3e})",
            fa.slope, fb.slope
        )));
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?.value;
    let mut fd = f(d)?.value;
    while b - a > 1e-10 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?.value;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?.value;
        }
        if (d - c).abs() <= f64::EPSILON * c.abs().max(1.0) {
            break;
        }
    }
    let golden = 0.5 * (a + b);
    let lo = bracket.0.min(bracket.1);
    let hi = bracket.0.max(bracket.1);
    let curvature = second_derivative(|nu| f(nu).map(|p| p.value), golden, CURVATURE_STEP)?;
    if !(curvature > 0.0) {
        return Err(Error::Degenerate(format!("band {k}: curvature {curvature:.3e} at ν = {golden} is not positive")));
    }
    let mut nu = golden;
    for _ in 0..4 {
        let slope = f(nu)?.slope;
        let next = (nu - slope / curvature).clamp(lo, hi);
        let moved = (next - nu).abs();
        nu = next;
        if moved < 1e-14 {
            break;
        }
    }
    let mu_c = f(nu)?.value;
    let curvature = second_derivative(|x| f(x).map(|p| p.value), nu, CURVATURE_STEP)?;
    if !(curvature > 0.0) {
        return Err(Error::Degenerate(format!("band {k}: curvature {curvature:.3e} at ν = {nu} is not positive")));
    }
    let derivative = first_derivative(|x| f(x).map(|p| p.value), nu, CURVATURE_STEP)?;
    if derivative.abs() > 1e-8 {
        return Err(Error::Diagnostic(format!(
            "band {k}: finite-difference slope {derivative:.3e} at the located minimum exceeds 1e-8"
        )));
    }
    Ok(CriticalPointData { band: k, nu_c: nu, mu_c, curvature })
}

/// Five-point centered second derivative.
/// Band-1 critical point on the default grid, computed once per process.
pub fn reference_critical_point() -> Result<CriticalPointData> {
    static CELL: std::sync::OnceLock<std::result::Result<CriticalPointData, String>> = std::sync::OnceLock::new();
    CELL.get_or_init(|| find_critical_point(1, (0.0, 1.0), &MontgomeryGrid::default()).map_err(|e| e.to_string()))
        .clone()
        .map_err(Error::Diagnostic)
}

pub(crate) fn second_derivative(f: impl Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    let (m2, m1, c, p1, p2) = (f(x - 2.0 * h)?, f(x - h)?, f(x)?, f(x + h)?, f(x + 2.0 * h)?);
    Ok((-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h * h))
}

/// Five-point centered first derivative.
pub(crate) fn first_derivative(f: impl Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    let (m2, m1, p1, p2) = (f(x - 2.0 * h)?, f(x - h)?, f(x + h)?, f(x + 2.0 * h)?);
    Ok((m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointScan {
    pub schema_version: u32,
    pub band: usize,
    pub minima: Vec<CriticalPointData>,
    /// More than one local minimum was found on the scanned range.
    pub multiple: bool,
}

/// Locates every local minimum of band `k` on `[nu_lo, nu_hi]` from slope
/// sign changes on a coarse scan. Uniqueness is reported, never assumed.
pub fn scan_critical_points(k: usize, nu_lo: f64, nu_hi: f64, samples: usize, grid: &MontgomeryGrid) -> Result<CriticalPointScan> {
    let table = dispersive_curve(k, nu_lo, nu_hi, samples, grid)?;
    let mut minima = Vec::new();
    for i in 0..samples - 1 {
        let (s0, s1) = (table.slopes[i], table.slopes[i + 1]);
        if s0 < 0.0 && s1 > 0.0 {
            minima.push(find_critical_point(k, (table.nu_grid[i], table.nu_grid[i + 1]), grid)?);
        }
    }
    let multiple = minima.len() > 1;
    Ok(CriticalPointScan { schema_version: SCHEMA_VERSION, band: k, minima, multiple })
}
