//! Classical actions `J(E)` of sublevel sets and the leading-order
//! Bohr–Sommerfeld rule `J(E_n) = 2πℏ(n + ½)`.
//!
//! Sublevel sets are star-shaped about the symbol minimum in the regular
//! windows used here, so `J(E) = ½∮ r(θ)² dθ` with `r(θ)` found by root
//! bracketing along rays. The periodic trapezoid rule in `θ` converges
//! geometrically, far beyond what a cell-based area count reaches.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::PhaseSpaceSymbol;
use crate::interp::HermiteTable;
use crate::spectrum::SpectrumResult;
use crate::{Error, Result};

/// Axis-aligned phase-space box the level sets must stay inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBox {
    pub x: (f64, f64),
    pub xi: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProfile {
    pub band: Option<usize>,
    pub center: (f64, f64),
    pub energy_grid: Vec<f64>,
    pub j_values: Vec<f64>,
    /// `dJ/dE` by centered differences of the action.
    pub action_slopes: Vec<f64>,
    /// Period of the flow, `∮ ds/|∇a|`, computed from the level-set geometry.
    pub periods: Vec<f64>,
    pub monotone: bool,
}

const RAYS: usize = 256;
const MARCH: usize = 200;

struct LevelSet {
    area: f64,
    period: f64,
}

fn ray_length(bounds: &PhaseBox, center: (f64, f64), (c, s): (f64, f64)) -> f64 {
    let along = |lo: f64, hi: f64, o: f64, d: f64| {
        if d > 0.0 {
            (hi - o) / d
        } else if d < 0.0 {
            (lo - o) / d
        } else {
            f64::INFINITY
        }
    };
    along(bounds.x.0, bounds.x.1, center.0, c).min(along(bounds.xi.0, bounds.xi.1, center.1, s))
}

fn level_set(
    symbol: &dyn PhaseSpaceSymbol,
    center: (f64, f64),
    bounds: &PhaseBox,
    energy: f64,
    check_beyond: bool,
) -> Result<LevelSet> {
    let at = |r: f64, (c, s): (f64, f64)| symbol.value(center.0 + r * c, center.1 + r * s);
    let mut area = 0.0;
    let mut period = 0.0;
    let dtheta = 2.0 * PI / RAYS as f64;
    for i in 0..RAYS {
        let theta = i as f64 * dtheta;
        let dir = (theta.cos(), theta.sin());
        let r_max = ray_length(bounds, center, dir);
        let step = r_max / MARCH as f64;
        let mut crossing = None;
        for j in 1..=MARCH {
            if at(j as f64 * step, dir)? > energy {
                crossing = Some(j);
                break;
            }
        }
        let j = crossing.ok_or_else(|| {
            Error::Coverage(format!("level set E = {energy} reaches the box boundary along θ = {theta:.3}"))
        })?;
        if check_beyond {
            for jj in j + 1..=MARCH {
                if at(jj as f64 * step, dir)? <= energy {
                    return Err(Error::Regularity(format!(
                        "sublevel set E = {energy} is not star-shaped about the minimum (θ = {theta:.3})"
                    )));
                }
            }
        }
        let (mut a, mut b) = ((j - 1) as f64 * step, j as f64 * step);
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if at(mid, dir)? > energy {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 1e-15 * b {
                break;
            }
        }
        let r = 0.5 * (a + b);
        let (x, xi) = (center.0 + r * dir.0, center.1 + r * dir.1);
        let e = 1e-6 * (1.0 + r);
        let gx = (symbol.value(x + e, xi)? - symbol.value(x - e, xi)?) / (2.0 * e);
        let gy = (symbol.value(x, xi + e)? - symbol.value(x, xi - e)?) / (2.0 * e);
        let grad = gx.hypot(gy);
        let radial = gx * dir.0 + gy * dir.1;
        if !(radial > 1e-10 && grad > 1e-10) {
            return Err(Error::Regularity(format!(
                "gradient {grad:.3e} (radial {radial:.3e}) nearly vanishes on the level set E = {energy} at ({x:.4}, {xi:.4})"
            )));
        }
        let angular = r * (-gx * dir.1 + gy * dir.0);
        let dr = -angular / radial;
        area += 0.5 * r * r * dtheta;
        period += (r * r + dr * dr).sqrt() / grad * dtheta;
    }
    Ok(LevelSet { area, period })
}

/// `J` on `samples` equally spaced energies of `window`.
pub fn action_profile(
    symbol: &dyn PhaseSpaceSymbol,
    center: (f64, f64),
    bounds: PhaseBox,
    window: (f64, f64),
    samples: usize,
) -> Result<ActionProfile> {
    let (e1, e2) = window;
    if !(e1 < e2) || samples < 2 {
        return Err(Error::Precondition(format!("need E1 < E2 and ≥ 2 samples, got {window:?}, {samples}")));
    }
    let bottom = symbol.value(center.0, center.1)?;
    if !(e1 > bottom) {
        return Err(Error::Precondition(format!("window starts at {e1}, not above the symbol minimum {bottom}")));
    }
    let de = 1e-4 * (e2 - e1);
    let mut profile =
        ActionProfile { band: None, center, energy_grid: Vec::new(), j_values: Vec::new(), action_slopes: Vec::new(), periods: Vec::new(), monotone: true };
    for i in 0..samples {
        let e = e1 + (e2 - e1) * i as f64 / (samples - 1) as f64;
        let mid = level_set(symbol, center, &bounds, e, true)?;
        let up = level_set(symbol, center, &bounds, e + de, false)?;
        let down = level_set(symbol, center, &bounds, e - de, false)?;
        profile.energy_grid.push(e);
        profile.j_values.push(mid.area);
        profile.action_slopes.push((up.area - down.area) / (2.0 * de));
        profile.periods.push(mid.period);
    }
    profile.monotone = profile.j_values.windows(2).all(|w| w[1] > w[0]) && profile.j_values[0] >= 0.0;
    Ok(profile)
}

/// Solutions of `J(E) = 2πℏ(n + ½)` inside the profile window, by bisection
/// on the Hermite interpolant of `J`.
pub fn bohr_sommerfeld_spectrum(profile: &ActionProfile, hbar: f64) -> Result<SpectrumResult> {
    if !profile.monotone {
        return Err(Error::Precondition("action profile is not monotone".into()));
    }
    if !(hbar > 0.0) {
        return Err(Error::Precondition(format!("ℏ must be positive, got {hbar}")));
    }
    let table = HermiteTable::new(profile.energy_grid.clone(), profile.j_values.clone(), profile.action_slopes.clone())?;
    let (e1, e2) = table.range();
    let (j1, j2) = (table.eval(e1)?, table.eval(e2)?);
    let quantum = 2.0 * PI * hbar;
    let first = (j1 / quantum - 0.5).ceil().max(0.0) as usize;
    let mut values = Vec::new();
    let mut indices = Vec::new();
    let mut n = first;
    while quantum * (n as f64 + 0.5) <= j2 {
        let target = quantum * (n as f64 + 0.5);
        let (mut a, mut b) = (e1, e2);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if table.eval(mid)? < target {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= 1e-15 * b.abs().max(1.0) {
                break;
            }
        }
        values.push(0.5 * (a + b));
        indices.push(n);
        n += 1;
    }
    let mut s = SpectrumResult::new("bohr_sommerfeld", hbar.powi(3), Vec::new(), values, Vec::new());
    s.residuals = vec![0.0; s.eigenvalues.len()];
    s.band = profile.band;
    s.indices = indices;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc_box() -> PhaseBox {
        PhaseBox { x: (-2.0, 2.0), xi: (-2.0, 2.0) }
    }

    #[test]
    fn harmonic_action_is_disc_area() {
        let sym = |x: f64, xi: f64| x * x + xi * xi;
        let p = action_profile(&sym, (0.0, 0.0), disc_box(), (0.5, 2.0), 4).unwrap();
        for (e, j) in p.energy_grid.iter().zip(&p.j_values) {
            assert!((j - PI * e).abs() < 1e-6);
        }
        // Doubling the energy doubles the action.
        let q = action_profile(&sym, (0.0, 0.0), disc_box(), (1.0, 4.0), 4).unwrap_err();
        assert!(matches!(q, Error::Coverage(_)));
        let wide = PhaseBox { x: (-3.0, 3.0), xi: (-3.0, 3.0) };
        let q = action_profile(&sym, (0.0, 0.0), wide, (1.0, 4.0), 4).unwrap();
        for (a, b) in p.j_values.iter().zip(&q.j_values) {
            assert!((2.0 * a - b).abs() < 1e-6);
        }
        for (s, t) in p.action_slopes.iter().zip(&p.periods) {
            assert!((s - PI).abs() < 1e-6 && (t - PI).abs() < 1e-6);
        }
    }

    #[test]
    fn harmonic_bohr_sommerfeld_is_exact() {
        let sym = |x: f64, xi: f64| x * x + xi * xi;
        let p = action_profile(&sym, (0.0, 0.0), disc_box(), (0.05, 3.0), 6).unwrap();
        let s = bohr_sommerfeld_spectrum(&p, 0.1).unwrap();
        assert_eq!(s.indices, (0..15).collect::<Vec<_>>());
        for (n, e) in s.indices.iter().zip(&s.eigenvalues) {
            assert!((e - 0.1 * (2 * n + 1) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_window_gives_empty_spectrum() {
        let sym = |x: f64, xi: f64| x * x + xi * xi;
        let p = action_profile(&sym, (0.0, 0.0), disc_box(), (1.2, 1.5), 3).unwrap();
        assert!(bohr_sommerfeld_spectrum(&p, 1.0).unwrap().eigenvalues.is_empty());
    }

    #[test]
    fn saddle_is_a_regularity_error() {
        // Double well in x: the level through the saddle value 1 is singular.
        let sym = |x: f64, xi: f64| (x * x - 1.0).powi(2) + xi * xi;
        let err = action_profile(&sym, (1.0, 0.0), disc_box(), (0.5, 1.5), 3).unwrap_err();
        assert!(matches!(err, Error::Regularity(_)), "{err}");
    }
}
