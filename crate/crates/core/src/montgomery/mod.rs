//! The fiber operators `D² + (ν − t²/2)²` on a truncated line.
//!
//! Discretization is second-order finite differences with Dirichlet ends.
//! Because the potential is even in `t`, each solve splits into an even and
//! an odd sector: band `k` lives in the sector of parity `(−1)^(k−1)`. The
//! sector matrices reproduce the full-grid spectrum exactly while keeping
//! the exponentially close band pairs at large `ν` apart.
//!
//! Eigenvalues default to a Richardson combination of the grid and its
//! every-other-point coarsening, which removes the `O(Δ²)` error.

mod curve;
mod moments;

pub use curve::{
    dispersive_curve, find_critical_point, reference_critical_point, scan_critical_points, CriticalPointData, CriticalPointScan,
    DispersiveCurveTable,
};
pub use moments::{eigenfunction_moment, eigenpair_nu_derivative, Polynomial};
pub(crate) use curve::evaluate_many;

use serde::{Deserialize, Serialize};

use crate::linalg::{dense_band_eigensolve, SymmetricBandMatrix};
use crate::{Error, Result};

/// Uniform grid on `[−T, T]` with an odd number of points, so `t = 0` is a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MontgomeryGrid {
    pub half_width: f64,
    pub points: usize,
    /// Combine with the every-other-point grid to cancel the `O(Δ²)` error.
    pub richardson: bool,
    /// Energy the caller intends to resolve; the wall at `±T` must exceed it
    /// by `barrier_margin`.
    pub target_energy: f64,
    pub barrier_margin: f64,
}

impl Default for MontgomeryGrid {
    fn default() -> Self {
        Self { half_width: 10.0, points: 2001, richardson: true, target_energy: 10.0, barrier_margin: 50.0 }
    }
}

impl MontgomeryGrid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        let g = Self { half_width, points, ..Self::default() };
        g.validate()?;
        Ok(g)
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn nodes(&self) -> Vec<f64> {
        let dt = self.spacing();
        (0..self.points).map(|i| -self.half_width + i as f64 * dt).collect()
    }

    /// Same window with twice the resolution (spacing halved).
    pub fn refined(&self) -> Self {
        Self { points: 2 * self.points - 1, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(Error::Precondition("grid half-width must be positive".into()));
        }
        if self.points < 9 || self.points % 2 == 0 {
            return Err(Error::Precondition(format!(
                "grid needs an odd number of points ≥ 9, got {}",
                self.points
            )));
        }
        if self.richardson && self.points % 4 != 1 {
            return Err(Error::Precondition(format!(
                "Richardson extrapolation needs points ≡ 1 (mod 4), got {}",
                self.points
            )));
        }
        Ok(())
    }

    /// Smallest `T` whose wall `(T²/2 − ν)²` reaches `energy + barrier_margin`.
    pub fn required_half_width(&self, nu: f64, energy: f64) -> f64 {
        (2.0 * (nu.max(0.0) + (energy + self.barrier_margin).sqrt())).sqrt()
    }

    fn check_barrier(&self, nu: f64, energy: f64) -> Result<()> {
        let wall = potential(nu, self.half_width);
        if nu > 0.5 * self.half_width * self.half_width || wall < energy + self.barrier_margin {
            return Err(Error::Precondition(format!(
                "potential wall {wall:.3} at T = {} is below energy {energy:.3} + margin {} for ν = {nu}; need T ≥ {:.3}",
                self.half_width,
                self.barrier_margin,
                self.required_half_width(nu, energy)
            )));
        }
        Ok(())
    }
}

#[inline]
pub fn potential(nu: f64, t: f64) -> f64 {
    let s = nu - 0.5 * t * t;
    s * s
}

/// ν-derivative of the potential, `2(ν − t²/2)`.
#[inline]
pub fn potential_nu_derivative(nu: f64, t: f64) -> f64 {
    2.0 * (nu - 0.5 * t * t)
}

/// Full-grid tridiagonal matrix of `−d²/dt² + V(t)` with Dirichlet ends.
pub fn line_operator(grid: &MontgomeryGrid, v: impl Fn(f64) -> f64) -> SymmetricBandMatrix<f64> {
    let dt = grid.spacing();
    let inv = 1.0 / (dt * dt);
    let diag: Vec<f64> = grid.nodes().iter().map(|&t| 2.0 * inv + v(t)).collect();
    SymmetricBandMatrix::tridiagonal(&diag, &vec![-inv; grid.points - 1])
}

pub fn assemble_montgomery(nu: f64, grid: &MontgomeryGrid) -> Result<SymmetricBandMatrix<f64>> {
    grid.validate()?;
    grid.check_barrier(nu, grid.target_energy)?;
    Ok(line_operator(grid, |t| potential(nu, t)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MontgomeryEigenpair {
    pub nu: f64,
    pub band: usize,
    /// Eigenvalue (Richardson-combined when the grid asks for it).
    pub value: f64,
    /// `∂_ν` of `value` by Hellmann–Feynman.
    pub slope: f64,
    /// Eigenvalue of the fine grid alone.
    pub grid_value: f64,
    /// Grid values on [`MontgomeryGrid::nodes`], trapezoid-normalized in L².
    pub function: Vec<f64>,
    /// Same eigenfunction on the every-other-point grid (empty without
    /// Richardson); moments combine both levels.
    pub coarse_function: Vec<f64>,
    pub sign_anchor: f64,
    pub spacing: f64,
}

/// Band eigenvalue together with its Hellmann–Feynman slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BandPoint {
    pub value: f64,
    pub slope: f64,
}

struct SectorSolution {
    values: Vec<f64>,
    slopes: Vec<f64>,
    functions: Vec<Vec<f64>>,
}

/// Solves one parity sector on a grid of `m + 1` nonnegative nodes `0, Δ, …, mΔ`.
fn solve_sector(nu: f64, half_points: usize, dt: f64, even: bool, count: usize) -> Result<SectorSolution> {
    let inv = 1.0 / (dt * dt);
    let start = if even { 0 } else { 1 };
    let ts: Vec<f64> = (start..half_points).map(|i| i as f64 * dt).collect();
    let diag: Vec<f64> = ts.iter().map(|&t| 2.0 * inv + potential(nu, t)).collect();
    let mut off = vec![-inv; ts.len() - 1];
    if even {
        off[0] = -std::f64::consts::SQRT_2 * inv;
    }
    let m = SymmetricBandMatrix::tridiagonal(&diag, &off);
    let r = dense_band_eigensolve(&m, count, true)?;
    let vecs = r.eigenvectors.expect("vectors requested");
    let full_len = 2 * half_points - 1;
    let c = half_points - 1;
    let mut values = Vec::with_capacity(count);
    let mut slopes = Vec::with_capacity(count);
    let mut functions = Vec::with_capacity(count);
    for j in 0..count {
        let y = vecs.column(j);
        let mut w = vec![0.0; full_len];
        for (idx, &yv) in y.iter().enumerate() {
            let i = idx + start;
            if i == 0 {
                w[c] = std::f64::consts::SQRT_2 * yv;
            } else {
                w[c + i] = yv;
                w[c - i] = if even { yv } else { -yv };
            }
        }
        let (value, slope) = rayleigh_and_slope(nu, &w, dt);
        values.push(value);
        slopes.push(slope);
        functions.push(w);
    }
    Ok(SectorSolution { values, slopes, functions })
}

/// Rayleigh quotient in difference form (no cancellation against the large
/// `2/Δ²` diagonal) and the discrete Hellmann–Feynman slope.
fn rayleigh_and_slope(nu: f64, w: &[f64], dt: f64) -> (f64, f64) {
    let n = w.len();
    let half = (n - 1) / 2;
    let mut norm2 = 0.0;
    let mut pot = 0.0;
    let mut dpot = 0.0;
    for (i, &u) in w.iter().enumerate() {
        let t = (i as f64 - half as f64) * dt;
        let u2 = u * u;
        norm2 += u2;
        pot += potential(nu, t) * u2;
        dpot += potential_nu_derivative(nu, t) * u2;
    }
    let mut kin = w[0] * w[0] + w[n - 1] * w[n - 1];
    for i in 0..n - 1 {
        let d = w[i + 1] - w[i];
        kin += d * d;
    }
    ((pot + kin / (dt * dt)) / norm2, dpot / norm2)
}

struct SectorBands {
    points: Vec<BandPoint>,
    raw: Vec<f64>,
    fine: Vec<Vec<f64>>,
    coarse: Vec<Vec<f64>>,
}

/// Values and slopes of bands `1..=count` of one parity, on the fine grid and
/// (if requested) Richardson-combined, with the grid functions of both levels.
fn sector_bands(nu: f64, grid: &MontgomeryGrid, even: bool, count: usize) -> Result<SectorBands> {
    let dt = grid.spacing();
    let half_points = (grid.points + 1) / 2;
    let fine = solve_sector(nu, half_points, dt, even, count)?;
    let raw = fine.values.clone();
    if grid.richardson {
        let coarse = solve_sector(nu, (half_points + 1) / 2, 2.0 * dt, even, count)?;
        let points = (0..count)
            .map(|j| BandPoint {
                value: (4.0 * fine.values[j] - coarse.values[j]) / 3.0,
                slope: (4.0 * fine.slopes[j] - coarse.slopes[j]) / 3.0,
            })
            .collect();
        Ok(SectorBands { points, raw, fine: fine.functions, coarse: coarse.functions })
    } else {
        let points = (0..count).map(|j| BandPoint { value: fine.values[j], slope: fine.slopes[j] }).collect();
        Ok(SectorBands { points, raw, fine: fine.functions, coarse: Vec::new() })
    }
}

/// Value and Hellmann–Feynman slope of band `k` at `ν`, without any gap
/// requirement (used to tabulate dispersive curves).
pub(crate) fn band_point(k: usize, nu: f64, grid: &MontgomeryGrid) -> Result<BandPoint> {
    if k == 0 {
        return Err(Error::Precondition("bands are numbered from 1".into()));
    }
    grid.validate()?;
    let even = k % 2 == 1;
    let j = (k - 1) / 2;
    let p = sector_bands(nu, grid, even, j + 1)?.points[j];
    grid.check_barrier(nu, p.value)?;
    Ok(p)
}

/// Eigenvalue of band `k` at `ν`.
pub fn band_value(k: usize, nu: f64, grid: &MontgomeryGrid) -> Result<f64> {
    band_point(k, nu, grid).map(|p| p.value)
}

/// Hellmann–Feynman derivative `⟨u, 2(ν − t²/2) u⟩` of band `k` at `ν`.
pub fn band_slope(k: usize, nu: f64, grid: &MontgomeryGrid) -> Result<f64> {
    band_point(k, nu, grid).map(|p| p.slope)
}

/// The `bands` lowest eigenpairs at `ν`, normalized and sign-fixed.
pub fn montgomery_spectrum(nu: f64, bands: usize, grid: &MontgomeryGrid) -> Result<Vec<MontgomeryEigenpair>> {
    if bands == 0 {
        return Err(Error::Precondition("bands must be at least 1".into()));
    }
    grid.validate()?;
    // One extra band so the gap above the last requested one is checked too.
    let total = bands + 1;
    let n_even = total.div_ceil(2);
    let n_odd = total / 2;
    let even = sector_bands(nu, grid, true, n_even)?;
    let odd = if n_odd > 0 { Some(sector_bands(nu, grid, false, n_odd)?) } else { None };
    let pick = |k: usize| -> (&SectorBands, usize) {
        let j = (k - 1) / 2;
        if k % 2 == 1 {
            (&even, j)
        } else {
            (odd.as_ref().expect("odd sector solved"), j)
        }
    };
    for k in 1..total {
        let gap = pick(k + 1).0.points[pick(k + 1).1].value - pick(k).0.points[pick(k).1].value;
        if !(gap > 1e-6) {
            return Err(Error::Degenerate(format!(
                "bands {k} and {} at ν = {nu} are separated by {gap:.3e} (≤ 1e-6)",
                k + 1
            )));
        }
    }
    let (sb, j) = pick(bands);
    grid.check_barrier(nu, sb.points[j].value)?;
    (1..=bands)
        .map(|k| {
            let (sb, j) = pick(k);
            extract_pair(nu, k, sb, j, grid.spacing())
        })
        .collect()
}

/// Eigenpair of band `k` alone. Only its own parity sector is solved, so
/// nearly degenerate partners of the other parity (large `ν`) are no obstacle.
pub fn band_eigenpair(k: usize, nu: f64, grid: &MontgomeryGrid) -> Result<MontgomeryEigenpair> {
    if k == 0 {
        return Err(Error::Precondition("bands are numbered from 1".into()));
    }
    grid.validate()?;
    let even = k % 2 == 1;
    let j = (k - 1) / 2;
    let sb = sector_bands(nu, grid, even, j + 2)?;
    let gap = sb.points[j + 1].value - sb.points[j].value;
    if !(gap > 1e-6) {
        return Err(Error::Degenerate(format!("band {k} at ν = {nu} is within {gap:.3e} of its sector neighbor")));
    }
    grid.check_barrier(nu, sb.points[j].value)?;
    extract_pair(nu, k, &sb, j, grid.spacing())
}

fn extract_pair(nu: f64, k: usize, sb: &SectorBands, j: usize, dt: f64) -> Result<MontgomeryEigenpair> {
    let mut f = sb.fine[j].clone();
    normalize(&mut f, dt);
    let c = (f.len() - 1) / 2;
    let mut anchor = trapezoid(&f[c..], dt);
    if anchor < 0.0 {
        f.iter_mut().for_each(|u| *u = -*u);
        anchor = -anchor;
    }
    check_tail(&f, nu, k)?;
    let coarse_function = match sb.coarse.get(j) {
        Some(g) => {
            let mut g = g.clone();
            normalize(&mut g, 2.0 * dt);
            let overlap: f64 = g.iter().enumerate().map(|(i, v)| v * f[2 * i]).sum();
            if overlap < 0.0 {
                g.iter_mut().for_each(|u| *u = -*u);
            }
            g
        }
        None => Vec::new(),
    };
    Ok(MontgomeryEigenpair {
        nu,
        band: k,
        value: sb.points[j].value,
        slope: sb.points[j].slope,
        grid_value: sb.raw[j],
        function: f,
        coarse_function,
        sign_anchor: anchor,
        spacing: dt,
    })
}

fn normalize(f: &mut [f64], dt: f64) {
    let norm = trapezoid(&f.iter().map(|u| u * u).collect::<Vec<_>>(), dt).sqrt();
    f.iter_mut().for_each(|u| *u /= norm);
}

fn check_tail(f: &[f64], nu: f64, band: usize) -> Result<()> {
    let n = f.len();
    let edge = ((n as f64) * 0.05).ceil() as usize;
    let peak = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tail = f[..edge].iter().chain(&f[n - edge..]).fold(0.0f64, |m, v| m.max(v.abs()));
    if tail > 1e-8 * peak {
        return Err(Error::Resolution(format!(
            "band {band} at ν = {nu}: tail amplitude ratio {:.2e} exceeds 1e-8; enlarge the half-width",
            tail / peak
        )));
    }
    Ok(())
}

pub(crate) fn trapezoid(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values.iter().sum();
    dt * (inner - 0.5 * (values[0] + values[n - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn potential_entries() {
        let g = MontgomeryGrid::default();
        let m = assemble_montgomery(0.0, &g).unwrap();
        let inv = 1.0 / (g.spacing() * g.spacing());
        for (i, t) in g.nodes().iter().enumerate() {
            assert!((m.get(i, i) - 2.0 * inv - t.powi(4) / 4.0).abs() < 1e-9);
        }
        // ν = 1 and t = √2 makes the potential vanish.
        assert!(potential(1.0, 2f64.sqrt()) < 1e-30);
        let coarse = MontgomeryGrid { half_width: 2f64.sqrt() * 4.0, points: 9, richardson: false, ..g };
        let m = assemble_montgomery(1.0, &coarse).unwrap();
        let inv = 1.0 / (coarse.spacing() * coarse.spacing());
        // Node 5 sits at t = √2.
        assert!((m.get(5, 5) - 2.0 * inv).abs() < 1e-12);
    }

    #[test]
    fn barrier_violation_names_required_width() {
        let g = MontgomeryGrid { half_width: 3.0, points: 101, richardson: false, ..Default::default() };
        let err = assemble_montgomery(0.0, &g).unwrap_err().to_string();
        assert!(err.contains("need T"), "{err}");
    }

    #[test]
    fn grid_validation() {
        assert!(MontgomeryGrid::new(10.0, 2000).is_err());
        assert!(MontgomeryGrid::new(10.0, 2003).is_err());
        assert!(MontgomeryGrid::new(10.0, 2001).is_ok());
    }

    #[test]
    fn sector_split_matches_full_grid_spectrum() {
        let g = MontgomeryGrid { half_width: 8.0, points: 401, richardson: false, ..Default::default() };
        for nu in [-1.0, 0.3, 2.5] {
            let full = dense_band_eigensolve(&line_operator(&g, |t| potential(nu, t)), 4, false).unwrap();
            let pairs = montgomery_spectrum(nu, 4, &g).unwrap();
            for k in 0..4 {
                assert!((full.eigenvalues[k] - pairs[k].grid_value).abs() < 1e-9, "ν={nu} k={k}");
            }
        }
    }

    #[test]
    fn quartic_ground_state_against_fine_grid_oracle() {
        let g = MontgomeryGrid::default();
        let v = montgomery_spectrum(0.0, 1, &g).unwrap()[0].value;
        let oracle = band_value(1, 0.0, &MontgomeryGrid { points: 8001, ..g }).unwrap();
        assert!((v - 0.668).abs() < 1e-3);
        assert!((v - oracle).abs() < 1e-8);
    }

    #[test]
    fn negative_parameter_bound() {
        let pairs = montgomery_spectrum(-3.0, 1, &MontgomeryGrid::default()).unwrap();
        assert!(pairs[0].value >= 9.0);
    }

    #[test]
    fn value_near_critical_parameter() {
        let g = MontgomeryGrid::default();
        let v = band_value(1, 0.35, &g).unwrap();
        let oracle = band_value(1, 0.35, &MontgomeryGrid { points: 8001, ..g }).unwrap();
        assert!((v - 0.5698).abs() < 1e-4);
        assert!((v - oracle).abs() < 1e-8);
    }

    #[test]
    fn eigenpairs_are_normalized_signed_and_decaying() {
        let g = MontgomeryGrid::default();
        for pair in montgomery_spectrum(0.8, 4, &g).unwrap() {
            let n2 = trapezoid(&pair.function.iter().map(|u| u * u).collect::<Vec<_>>(), g.spacing());
            assert!((n2 - 1.0).abs() < 1e-10);
            assert!(pair.sign_anchor >= 0.0);
        }
    }

    #[test]
    fn single_band_pair_matches_spectrum_and_survives_large_parameter() {
        let g = MontgomeryGrid::default();
        let all = montgomery_spectrum(1.0, 3, &g).unwrap();
        for k in 1..=3 {
            let p = band_eigenpair(k, 1.0, &g).unwrap();
            assert_eq!(p.value, all[k - 1].value);
            assert_eq!(p.function, all[k - 1].function);
        }
        assert!(montgomery_spectrum(8.0, 1, &g).is_err());
        let p = band_eigenpair(1, 8.0, &g).unwrap();
        assert!((p.value - band_value(1, 8.0, &g).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn near_degenerate_pair_is_reported() {
        let g = MontgomeryGrid::default();
        assert!(matches!(montgomery_spectrum(9.0, 1, &g), Err(Error::Degenerate(_))));
        // The band value itself stays available.
        assert!(band_value(1, 9.0, &g).is_ok());
    }

    #[test]
    fn richardson_matches_grid_doubling() {
        let g = MontgomeryGrid::default();
        for nu in [-2.0, 0.0, 0.35, 1.0, 2.0, 4.0] {
            for k in 1..=3 {
                let a = band_value(k, nu, &g).unwrap();
                let b = band_value(k, nu, &g.refined()).unwrap();
                assert!((a - b).abs() <= 1e-7, "ν={nu} k={k}: {a} vs {b}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn bands_strictly_increase(nu in -3.0f64..4.0) {
            let pairs = montgomery_spectrum(nu, 3, &MontgomeryGrid::default()).unwrap();
            for w in pairs.windows(2) {
                prop_assert!(w[1].value - w[0].value > 1e-6);
            }
            prop_assert!(pairs[0].value >= 0.0);
        }

        #[test]
        fn hellmann_feynman_matches_finite_difference(nu in -2.0f64..4.0) {
            let g = MontgomeryGrid::default();
            let h = 1e-4;
            let fd = (band_value(1, nu + h, &g).unwrap() - band_value(1, nu - h, &g).unwrap()) / (2.0 * h);
            let hf = band_slope(1, nu, &g).unwrap();
            prop_assert!((fd - hf).abs() < 1e-6, "fd {} hf {}", fd, hf);
        }
    }
}
