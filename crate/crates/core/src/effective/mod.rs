//! Scalar effective Hamiltonians on the curve.
//!
//! The principal symbol comes from the band-`k` dispersive curve through the
//! scaling `μ̊(x,ξ) = δ(x)^{2/3} μ̃(ξ δ(x)^{−1/3})`. The first-order correction
//! collects transverse moments of the fiber eigenfunction; those moments
//! depend on `(x, ξ)` only through `ν = ξ δ^{−1/3}` and a few powers of `δ`,
//! so they are tabulated once in `ν` and interpolated.

mod action;
mod harmonic;
mod quantize;

pub use action::{action_profile, bohr_sommerfeld_spectrum, ActionProfile, PhaseBox};
pub use harmonic::{harmonic_prediction, HarmonicPrediction, LambdaRow};
pub use quantize::{quantize_1d, quantize_effective, QuantizationSpec, QuantizedOperator1D};

use serde::{Deserialize, Serialize};

use crate::geometry::{tubular_gauge, GaugeData, ModelCatalogEntry};
use crate::interp::HermiteTable;
use crate::linalg::C64;
use crate::montgomery::{band_eigenpair, evaluate_many, potential, potential_nu_derivative, MontgomeryGrid};
use crate::{Error, Result};

/// A real function on phase space.
pub trait PhaseSpaceSymbol: Sync {
    fn value(&self, x: f64, xi: f64) -> Result<f64>;
}

impl<F: Fn(f64, f64) -> f64 + Sync> PhaseSpaceSymbol for F {
    fn value(&self, x: f64, xi: f64) -> Result<f64> {
        Ok(self(x, xi))
    }
}

pub const TRUNCATION_NOTE: &str =
    "bounded truncations of ξ and δ are the identity on the computational window; the cutoff in the first-order fiber term is dropped";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymbolOptions {
    /// Tabulated range of `ν`.
    pub nu_range: (f64, f64),
    /// Starting node spacing; halved until midpoint values move less than `tolerance`.
    pub initial_step: f64,
    pub tolerance: f64,
    /// Node spacing of the first-order moment tables.
    pub moment_step: f64,
    pub montgomery: MontgomeryGrid,
}

impl Default for SymbolOptions {
    fn default() -> Self {
        Self {
            nu_range: (-8.0, 8.0),
            initial_step: 0.05,
            tolerance: 1e-8,
            moment_step: 0.05,
            montgomery: MontgomeryGrid::default(),
        }
    }
}

/// Fiber moments as functions of `ν`, each a [`HermiteTable`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentTables {
    /// `⟨u, (ν − t²/2)² t u⟩`.
    pub curvature_moment: HermiteTable,
    /// `⟨u, (ν − t²/2) t³ u⟩`.
    pub gauge_moment: HermiteTable,
    /// Real and imaginary parts of `⟨u, ∂_ν𝔐 𝓘u − (𝓘𝔐 + 𝔐𝓘*) ∂_ν u⟩`, `𝓘 = ½ + t∂_t`.
    pub bracket_re: HermiteTable,
    pub bracket_im: HermiteTable,
    /// Real and imaginary parts of `⟨𝓘u, ∂_ν u⟩`.
    pub cross_re: HermiteTable,
    pub cross_im: HermiteTable,
}

/// Band-`k` effective symbol of a model, evaluable anywhere in its `ν` range.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectiveSymbol {
    pub band: usize,
    pub model: ModelCatalogEntry,
    pub gauge: GaugeData,
    pub curve: HermiteTable,
    /// Largest change of an interpolated value under the last table refinement.
    pub refinement_shift: f64,
    pub moments: Option<MomentTables>,
}

/// Terms of the first-order symbol at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubprincipalTerms {
    pub curvature: f64,
    pub gauge: f64,
    pub im_bracket: f64,
    pub im_cross: f64,
    pub total: f64,
}

impl EffectiveSymbol {
    /// Tabulates the dispersive curve, refining until the interpolant is
    /// stable to `options.tolerance`.
    pub fn principal_only(model: &ModelCatalogEntry, band: usize, options: &SymbolOptions) -> Result<Self> {
        let (lo, hi) = options.nu_range;
        if !(lo < hi) || !(options.initial_step > 0.0) {
            return Err(Error::Precondition(format!("bad ν range [{lo}, {hi}] or step {}", options.initial_step)));
        }
        let n = ((hi - lo) / options.initial_step).ceil() as usize;
        let mut nodes: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let mut points = evaluate_many(band, &nodes, &options.montgomery)?;
        for _ in 0..8 {
            let table = HermiteTable::new(
                nodes.clone(),
                points.iter().map(|p| p.value).collect(),
                points.iter().map(|p| p.slope).collect(),
            )?;
            let mids: Vec<f64> = nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
            let mid_points = evaluate_many(band, &mids, &options.montgomery)?;
            let mut shift: f64 = 0.0;
            for (m, p) in mids.iter().zip(&mid_points) {
                shift = shift.max((table.eval(*m)? - p.value).abs());
            }
            let mut merged_nodes = Vec::with_capacity(nodes.len() + mids.len());
            let mut merged_points = Vec::with_capacity(nodes.len() + mids.len());
            for i in 0..nodes.len() {
                merged_nodes.push(nodes[i]);
                merged_points.push(points[i]);
                if i < mids.len() {
                    merged_nodes.push(mids[i]);
                    merged_points.push(mid_points[i]);
                }
            }
            nodes = merged_nodes;
            points = merged_points;
            if shift < options.tolerance {
                let curve = HermiteTable::new(
                    nodes,
                    points.iter().map(|p| p.value).collect(),
                    points.iter().map(|p| p.slope).collect(),
                )?;
                let gauge = tubular_gauge(&model.field, &model.geometry)?;
                return Ok(Self { band, model: model.clone(), gauge, curve, refinement_shift: shift, moments: None });
            }
        }
        Err(Error::Resolution(format!("dispersive table for band {band} did not reach {:.1e} after 8 refinements", options.tolerance)))
    }

    /// Principal symbol plus the first-order moment tables.
    pub fn new(model: &ModelCatalogEntry, band: usize, options: &SymbolOptions) -> Result<Self> {
        let mut s = Self::principal_only(model, band, options)?;
        s.moments = Some(moment_tables(band, options)?);
        Ok(s)
    }

    pub fn nu_range(&self) -> (f64, f64) {
        self.curve.range()
    }

    fn fiber_parameter(&self, x: f64, xi: f64) -> Result<(f64, f64)> {
        let d = self.model.field.delta(x);
        if !(d > 0.0) {
            return Err(Error::Precondition(format!("δ({x}) = {d} is not positive")));
        }
        let nu = xi * d.powf(-1.0 / 3.0);
        let (lo, hi) = self.nu_range();
        if !(lo..=hi).contains(&nu) {
            return Err(Error::Range(format!(
                "(x, ξ) = ({x}, {xi}) needs ν = {nu:.4}; extend the tabulated range [{lo}, {hi}] to include it"
            )));
        }
        Ok((d, nu))
    }

    pub fn principal(&self, x: f64, xi: f64) -> Result<f64> {
        let (d, nu) = self.fiber_parameter(x, xi)?;
        Ok(d.powf(2.0 / 3.0) * self.curve.eval(nu)?)
    }

    pub fn subprincipal_terms(&self, x: f64, xi: f64) -> Result<SubprincipalTerms> {
        let m = self
            .moments
            .as_ref()
            .ok_or_else(|| Error::Precondition("symbol was built without first-order tables".into()))?;
        let (d, nu) = self.fiber_parameter(x, xi)?;
        let dp = self.model.field.delta_prime(x);
        let k = self.model.geometry.k(x);
        let kappa = self.gauge.kappa(x);
        let curvature = 2.0 * k * d.powf(1.0 / 3.0) * m.curvature_moment.eval(nu)?;
        let gauge = -2.0 * kappa * d.powf(-2.0 / 3.0) * m.gauge_moment.eval(nu)?;
        let im_bracket = -dp / (3.0 * d.powf(2.0 / 3.0)) * m.bracket_im.eval(nu)?;
        let im_cross = dp / (3.0 * d.powf(4.0 / 3.0)) * m.cross_im.eval(nu)?;
        let mu = d.powf(2.0 / 3.0) * self.curve.eval(nu)?;
        let total = curvature + gauge + im_bracket + mu * im_cross;
        Ok(SubprincipalTerms { curvature, gauge, im_bracket, im_cross, total })
    }

    pub fn subprincipal(&self, x: f64, xi: f64) -> Result<f64> {
        self.subprincipal_terms(x, xi).map(|t| t.total)
    }
}

fn uniform(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil().max(2.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

const NU_STEP: f64 = 1e-3;

fn moment_tables(band: usize, options: &SymbolOptions) -> Result<MomentTables> {
    let nodes = uniform(options.nu_range.0, options.nu_range.1, options.moment_step);
    let grid = &options.montgomery;
    let rows: Vec<[f64; 6]> = nodes.iter().map(|&nu| fiber_moments(band, nu, grid)).collect::<Result<_>>()?;
    let column = |c: usize| HermiteTable::from_values(nodes.clone(), rows.iter().map(|r| r[c]).collect());
    Ok(MomentTables {
        curvature_moment: column(0)?,
        gauge_moment: column(1)?,
        bracket_re: column(2)?,
        bracket_im: column(3)?,
        cross_re: column(4)?,
        cross_im: column(5)?,
    })
}

/// Trapezoid `∫ a · conj(b)`; the grid functions vanish at both ends.
fn inner(a: &[C64], b: &[C64], dt: f64) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<C64>() * dt
}

fn centered_derivative(w: &[C64], dt: f64) -> Vec<C64> {
    let n = w.len();
    let zero = C64::new(0.0, 0.0);
    (0..n)
        .map(|i| {
            let r = if i + 1 < n { w[i + 1] } else { zero };
            let l = if i > 0 { w[i - 1] } else { zero };
            (r - l) / (2.0 * dt)
        })
        .collect()
}

fn fiber_moments(band: usize, nu: f64, grid: &MontgomeryGrid) -> Result<[f64; 6]> {
    use crate::montgomery::{eigenfunction_moment, Polynomial};
    let pair = band_eigenpair(band, nu, grid)?;
    let curvature = eigenfunction_moment(&pair, &Polynomial::new(vec![0.0, nu * nu, 0.0, -nu, 0.0, 0.25]), 0)?;
    let gauge = eigenfunction_moment(&pair, &Polynomial::new(vec![0.0, 0.0, 0.0, nu, 0.0, -0.5]), 0)?;

    let align = |p: Vec<f64>| -> Vec<f64> {
        let ip: f64 = p.iter().zip(&pair.function).map(|(a, b)| a * b).sum();
        if ip < 0.0 {
            p.iter().map(|v| -v).collect()
        } else {
            p
        }
    };
    let plus = align(band_eigenpair(band, nu + NU_STEP, grid)?.function);
    let minus = align(band_eigenpair(band, nu - NU_STEP, grid)?.function);

    let dt = pair.spacing;
    let ts = grid.nodes();
    let u: Vec<C64> = pair.function.iter().map(|&v| C64::new(v, 0.0)).collect();
    let du: Vec<C64> = plus.iter().zip(&minus).map(|(a, b)| C64::new((a - b) / (2.0 * NU_STEP), 0.0)).collect();
    let scale_op = |w: &[C64]| -> Vec<C64> {
        let d = centered_derivative(w, dt);
        w.iter().zip(&d).zip(&ts).map(|((v, dv), t)| 0.5 * v + *t * dv).collect()
    };
    let scale_adjoint = |w: &[C64]| -> Vec<C64> {
        let tw: Vec<C64> = w.iter().zip(&ts).map(|(v, t)| v * *t).collect();
        let d = centered_derivative(&tw, dt);
        w.iter().zip(&d).map(|(v, dv)| 0.5 * v - dv).collect()
    };
    let fiber_op = |w: &[C64]| -> Vec<C64> {
        let n = w.len();
        let zero = C64::new(0.0, 0.0);
        (0..n)
            .map(|i| {
                let r = if i + 1 < n { w[i + 1] } else { zero };
                let l = if i > 0 { w[i - 1] } else { zero };
                -(r - 2.0 * w[i] + l) / (dt * dt) + potential(nu, ts[i]) * w[i]
            })
            .collect()
    };
    let iu = scale_op(&u);
    let dv_iu: Vec<C64> = iu.iter().zip(&ts).map(|(v, t)| v * potential_nu_derivative(nu, *t)).collect();
    let i_m_du = scale_op(&fiber_op(&du));
    let m_istar_du = fiber_op(&scale_adjoint(&du));
    let bracket = inner(&u, &dv_iu, dt) - inner(&u, &i_m_du, dt) - inner(&u, &m_istar_du, dt);
    let cross = inner(&iu, &du, dt);
    Ok([curvature, gauge, bracket.re, bracket.im, cross.re, cross.im])
}

/// Symbol values on a tensor grid; rows follow `x_grid`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSymbolGrid {
    pub band: usize,
    pub x_grid: Vec<f64>,
    pub xi_grid: Vec<f64>,
    pub principal: Vec<Vec<f64>>,
    pub subprincipal: Option<Vec<Vec<f64>>>,
    pub im_bracket: Option<Vec<Vec<f64>>>,
    pub im_cross: Option<Vec<Vec<f64>>>,
    pub truncation_note: String,
}

fn check_sorted(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() || v.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition(format!("{name} must be nonempty and strictly increasing")));
    }
    Ok(())
}

pub fn effective_principal(symbol: &EffectiveSymbol, x_grid: &[f64], xi_grid: &[f64]) -> Result<EffectiveSymbolGrid> {
    check_sorted("x_grid", x_grid)?;
    check_sorted("xi_grid", xi_grid)?;
    let principal = x_grid
        .iter()
        .map(|&x| xi_grid.iter().map(|&xi| symbol.principal(x, xi)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    if let Some(v) = principal.iter().flatten().find(|v| !(**v > 0.0)) {
        return Err(Error::Diagnostic(format!("principal symbol value {v} is not positive")));
    }
    Ok(EffectiveSymbolGrid {
        band: symbol.band,
        x_grid: x_grid.to_vec(),
        xi_grid: xi_grid.to_vec(),
        principal,
        subprincipal: None,
        im_bracket: None,
        im_cross: None,
        truncation_note: TRUNCATION_NOTE.into(),
    })
}

pub fn effective_subprincipal(symbol: &EffectiveSymbol, grid: &mut EffectiveSymbolGrid) -> Result<()> {
    let mut sub = Vec::with_capacity(grid.x_grid.len());
    let mut ib = Vec::with_capacity(grid.x_grid.len());
    let mut ic = Vec::with_capacity(grid.x_grid.len());
    for &x in &grid.x_grid {
        let terms: Vec<SubprincipalTerms> =
            grid.xi_grid.iter().map(|&xi| symbol.subprincipal_terms(x, xi)).collect::<Result<_>>()?;
        sub.push(terms.iter().map(|t| t.total).collect());
        ib.push(terms.iter().map(|t| t.im_bracket).collect());
        ic.push(terms.iter().map(|t| t.im_cross).collect());
    }
    grid.subprincipal = Some(sub);
    grid.im_bracket = Some(ib);
    grid.im_cross = Some(ic);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::model_by_name;
    use crate::montgomery::{band_value, reference_critical_point};
    use std::sync::OnceLock;

    fn narrow() -> SymbolOptions {
        SymbolOptions { nu_range: (-2.0, 3.0), moment_step: 0.1, ..SymbolOptions::default() }
    }

    fn model_a() -> &'static EffectiveSymbol {
        static S: OnceLock<EffectiveSymbol> = OnceLock::new();
        S.get_or_init(|| EffectiveSymbol::new(&model_by_name("model_a").unwrap(), 1, &narrow()).unwrap())
    }

    #[test]
    fn principal_obeys_scaling_identity_at_nodes() {
        let s = model_a();
        assert!(s.refinement_shift < 1e-8);
        let g = MontgomeryGrid::default();
        let xs = [-2.0, -0.4, 0.0, 1.3];
        let xis = [-0.5, 0.2, 0.57, 1.5];
        let grid = effective_principal(s, &xs, &xis).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let d = s.model.field.delta(x);
            for (j, &xi) in xis.iter().enumerate() {
                let exact = d.powf(2.0 / 3.0) * band_value(1, xi * d.powf(-1.0 / 3.0), &g).unwrap();
                assert!((grid.principal[i][j] - exact).abs() < 1e-8, "{x} {xi}");
            }
        }
    }

    #[test]
    fn constant_delta_symbol_is_independent_of_position() {
        let m = model_by_name("model_a_flat").unwrap();
        let s = EffectiveSymbol::principal_only(&m, 1, &narrow()).unwrap();
        for xi in [-1.0, 0.3, 2.0] {
            let a = s.principal(-3.0, xi).unwrap();
            assert_eq!(a, s.principal(2.5, xi).unwrap());
            assert!((a - s.curve.eval(xi).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn minimum_at_well_bottom() {
        let c = reference_critical_point().unwrap();
        let s = model_a();
        let bottom = s.principal(0.0, c.nu_c).unwrap();
        assert!((bottom - c.mu_c).abs() < 1e-8);
        for (x, xi) in [(0.1, c.nu_c), (0.0, c.nu_c + 0.05), (-0.2, c.nu_c - 0.1)] {
            assert!(s.principal(x, xi).unwrap() > bottom);
        }
    }

    #[test]
    fn out_of_range_names_extension() {
        let err = model_a().principal(0.0, 5.0).unwrap_err();
        assert!(matches!(err, Error::Range(ref m) if m.contains("extend")), "{err}");
    }

    #[test]
    fn first_order_symbol_vanishes_at_model_a_bottom() {
        let c = reference_critical_point().unwrap();
        let t = model_a().subprincipal_terms(0.0, c.nu_c).unwrap();
        assert!(t.total.abs() < 1e-6, "{t:?}");
    }

    #[test]
    fn imaginary_terms_vanish_for_real_eigenfunctions() {
        let s = model_a();
        let xs = [-1.5, 0.0, 0.7];
        let xis = [-1.0, 0.5, 2.0];
        let mut grid = effective_principal(s, &xs, &xis).unwrap();
        effective_subprincipal(s, &mut grid).unwrap();
        for row in grid.im_cross.as_ref().unwrap().iter().chain(grid.im_bracket.as_ref().unwrap()) {
            assert!(row.iter().all(|v| v.abs() <= 1e-9));
        }
        assert_eq!(grid.truncation_note, TRUNCATION_NOTE);
    }

    #[test]
    fn odd_moments_vanish_and_real_parts_are_recorded() {
        let m = model_a().moments.as_ref().unwrap();
        for nu in [-1.0, 0.57, 2.5] {
            assert!(m.curvature_moment.eval(nu).unwrap().abs() < 1e-12);
            assert!(m.gauge_moment.eval(nu).unwrap().abs() < 1e-12);
        }
        // The real part of ⟨𝓘u, ∂_ν u⟩ is a genuine nonzero quantity.
        assert!(m.cross_re.values.iter().any(|v| v.abs() > 1e-3));
    }
}
