//! Direct discretization of the magnetic Laplacian in dilated tubular
//! coordinates `(x, ť)`, `t = ℏ ť`, `ℏ = h^{1/3}`.
//!
//! The tangential factor uses link variables: with `φ = m^{-1/2} ψ` the
//! quadratic form is `Σ w |(ℏ/Δx)(e^{iθ} φ_{j+1} − φ_j)|²` where
//! `θ = −ℏ^{-1} ∫ Ǎ dx` over the link and `w = 1/m` at its midpoint. This
//! is Hermitian by construction, gauge covariant, and free of the spurious
//! zero modes a product of centered first differences would introduce.

mod diagnostics;

pub use diagnostics::{localization_diagnostics, LocalizationReport};

use serde::{Deserialize, Serialize};

use crate::geometry::{tubular_gauge, CurveGeometry, GaugeData, ModelCatalogEntry};
use crate::linalg::{sparse_eigensolve_smallest, Preconditioner, SparseBuilder, SparseSolveOptions, SparseSymmetricMatrix, C64};
use crate::montgomery::reference_critical_point;
use crate::spectrum::SpectrumResult;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `k ≡ 0`: no Jacobian weights, no curvature potential.
    Flat,
    Curved,
}

/// Interior tensor grid on `[−X, X] × [−Ť, Ť]` with Dirichlet boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubeDiscretization {
    #[serde(default)]
    pub x_center: f64,
    pub x_half_width: f64,
    pub x_points: usize,
    pub t_half_width: f64,
    pub t_points: usize,
    pub h: f64,
    /// Top of the energy window the grid must confine (rescaled units).
    pub energy_top: f64,
}

impl Default for TubeDiscretization {
    fn default() -> Self {
        Self { x_center: 0.0, x_half_width: 6.0, x_points: 301, t_half_width: 8.0, t_points: 121, h: 0.02, energy_top: 0.74 }
    }
}

impl TubeDiscretization {
    pub fn with_h(h: f64) -> Self {
        Self { h, ..Self::default() }
    }

    pub fn hbar(&self) -> f64 {
        self.h.cbrt()
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x_half_width / (self.x_points + 1) as f64
    }

    pub fn dt(&self) -> f64 {
        2.0 * self.t_half_width / (self.t_points + 1) as f64
    }

    /// Interior x nodes.
    pub fn x_nodes(&self) -> Vec<f64> {
        (0..self.x_points).map(|j| self.x_center - self.x_half_width + (j + 1) as f64 * self.dx()).collect()
    }

    pub fn t_nodes(&self) -> Vec<f64> {
        (0..self.t_points).map(|i| -self.t_half_width + (i + 1) as f64 * self.dt()).collect()
    }

    pub fn dimension(&self) -> usize {
        self.x_points * self.t_points
    }

    /// Shrinks the transverse window so the dilated tube fits in the
    /// tubular neighbourhood of `geometry`.
    pub fn fitted_to(mut self, geometry: &CurveGeometry) -> Self {
        let limit = 0.95 * geometry.tube_radius() / self.hbar();
        self.t_half_width = self.t_half_width.min(limit);
        self
    }

    pub fn check(&self, model: &ModelCatalogEntry) -> Result<()> {
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(Error::Precondition(format!("h = {} must lie in (0, 1)", self.h)));
        }
        if self.x_points < 3 || self.t_points < 3 {
            return Err(Error::Precondition("need at least 3 interior points per direction".into()));
        }
        if !(self.x_half_width > 0.0 && self.t_half_width > 0.0) {
            return Err(Error::Precondition("window half-widths must be positive".into()));
        }
        let d0 = model.geometry.tube_radius();
        if self.hbar() * self.t_half_width >= d0 {
            return Err(Error::Precondition(format!(
                "dilated tube ℏ·Ť = {:.4} exceeds the tubular radius {d0}",
                self.hbar() * self.t_half_width
            )));
        }
        let mu_c = reference_critical_point()?.mu_c;
        for x in [self.x_center - self.x_half_width, self.x_center + self.x_half_width] {
            let d = model.field.delta(x);
            let wall = if d > 0.0 { d.powf(2.0 / 3.0) * mu_c } else { f64::NEG_INFINITY };
            if wall < 1.2 * self.energy_top {
                return Err(Error::Precondition(format!(
                    "window edge x = {x}: δ^(2/3)·μ_c = {wall:.4} is below 1.2 × energy top {}",
                    self.energy_top
                )));
            }
        }
        Ok(())
    }
}

/// Whether the matrix is the rescaled operator or `h^{4/3}` times it,
/// assembled from the physical formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    Rescaled,
    Physical,
}

#[derive(Debug, Clone)]
pub struct MagneticOperator2D {
    pub matrix: SparseSymmetricMatrix<C64>,
    pub discretization: TubeDiscretization,
    pub model: ModelCatalogEntry,
    pub variant: Variant,
    pub units: Units,
    /// Largest `|A − Aᴴ|` entry after assembly.
    pub symmetry_defect: f64,
    /// Explicit lower bound `−ℏ²K²/(4 m₀²)` of the spectrum (scaled to units).
    pub lower_bound: f64,
}

impl MagneticOperator2D {
    /// Flat index with `ť` running fastest.
    pub fn index(&self, jx: usize, it: usize) -> usize {
        jx * self.discretization.t_points + it
    }
}

const GAUSS2: f64 = 0.577_350_269_189_625_8;

pub fn assemble_2d(model: &ModelCatalogEntry, disc: &TubeDiscretization, variant: Variant) -> Result<MagneticOperator2D> {
    assemble_in_units(model, disc, variant, Units::Rescaled)
}

pub fn assemble_in_units(
    model: &ModelCatalogEntry,
    disc: &TubeDiscretization,
    variant: Variant,
    units: Units,
) -> Result<MagneticOperator2D> {
    disc.check(model)?;
    let geometry = match variant {
        Variant::Flat => CurveGeometry::straight(),
        Variant::Curved => model.geometry,
    };
    let gauge = tubular_gauge(&model.field, &geometry)?;
    let (nx, nt) = (disc.x_points, disc.t_points);
    let (dx, dt) = (disc.dx(), disc.dt());
    let hbar = disc.hbar();
    let h = disc.h;
    let xs = disc.x_nodes();
    let ts = disc.t_nodes();
    let x_at = |j: isize| disc.x_center - disc.x_half_width + (j + 1) as f64 * dx;
    let jac = |x: f64, tc: f64| match variant {
        Variant::Flat => 1.0,
        Variant::Curved => geometry.jacobian(x, hbar * tc),
    };

    // Stiffness constants; the physical form carries h and the physical
    // transverse step ℏΔť, the rescaled form ℏ and Δť.
    let (tangential, transverse, curvature_scale) = match units {
        Units::Rescaled => (hbar * hbar / (dx * dx), 1.0 / (dt * dt), hbar * hbar),
        Units::Physical => {
            let dt_phys = hbar * dt;
            (h * h / (dx * dx), h * h / (dt_phys * dt_phys), h * h)
        }
    };

    // Link phases and weights for links j → j+1, j = −1..nx−1.
    let links = link_table(&gauge, disc, variant, units, &x_at, &ts)?;

    let mut b = SparseBuilder::<C64>::new(nx * nt);
    for jx in 0..nx {
        let x = xs[jx];
        let k = geometry.k(x);
        for (it, &tc) in ts.iter().enumerate() {
            let row = jx * nt + it;
            let m = jac(x, tc);
            let left = &links[jx * nt + it];
            let right = &links[(jx + 1) * nt + it];
            let mut diag = tangential * (left.weight + right.weight) / m + 2.0 * transverse;
            if variant == Variant::Curved {
                diag -= curvature_scale * k * k / (4.0 * m * m);
            }
            b.add(row, row, C64::new(diag, 0.0));
            if it + 1 < nt {
                b.add(row, row + 1, C64::new(-transverse, 0.0));
            }
            if jx + 1 < nx {
                let m_next = jac(xs[jx + 1], tc);
                let v = -tangential * right.weight / (m * m_next).sqrt();
                b.add(row, row + nt, C64::from_polar(v, right.phase));
            }
        }
    }
    let matrix = b.finalize()?;
    let symmetry_defect = matrix.hermitian_defect();
    let max_entry = matrix.max_abs_entry();
    if symmetry_defect > 1e-12 * max_entry {
        return Err(Error::Diagnostic(format!("assembly symmetry defect {symmetry_defect:e}")));
    }

    let lower_bound = match variant {
        Variant::Flat => 0.0,
        Variant::Curved => {
            let kb = geometry.curvature_bound;
            let m0 = 1.0 - hbar * disc.t_half_width * kb;
            -curvature_scale * kb * kb / (4.0 * m0 * m0)
        }
    };
    Ok(MagneticOperator2D {
        matrix,
        discretization: *disc,
        model: model.clone(),
        variant,
        units,
        symmetry_defect,
        lower_bound,
    })
}

#[derive(Debug, Clone, Copy)]
struct Link {
    weight: f64,
    phase: f64,
}

/// `(nx + 1) × nt` table of link weights `1/m` and Peierls phases.
fn link_table(
    gauge: &GaugeData,
    disc: &TubeDiscretization,
    variant: Variant,
    units: Units,
    x_at: &(impl Fn(isize) -> f64 + Sync),
    ts: &[f64],
) -> Result<Vec<Link>> {
    let hbar = disc.hbar();
    let h = disc.h;
    let dx = disc.dx();
    let nt = disc.t_points;
    let row = |j: usize| -> Result<Vec<Link>> {
        let (x0, x1) = (x_at(j as isize - 1), x_at(j as isize));
        let mid = 0.5 * (x0 + x1);
        let nodes = [mid - 0.5 * dx * GAUSS2, mid + 0.5 * dx * GAUSS2];
        ts.iter()
            .map(|&tc| {
                let weight = match variant {
                    Variant::Flat => 1.0,
                    Variant::Curved => 1.0 / gauge.geometry.jacobian(mid, hbar * tc),
                };
                let mut integral = 0.0;
                for &xg in &nodes {
                    let a = gauge.a_tilde(xg, hbar * tc)?;
                    integral += 0.5 * dx * match units {
                        // Ǎ = ℏ^{-2} Ã(x, ℏť), phase −ℏ^{-1}∫Ǎ.
                        Units::Rescaled => a / (hbar * hbar),
                        // Phase −h^{-1}∫Ã, written without the dilation.
                        Units::Physical => a / h,
                    };
                }
                let phase = match units {
                    Units::Rescaled => -integral / hbar,
                    Units::Physical => -integral,
                };
                Ok(Link { weight, phase })
            })
            .collect()
    };
    let rows: Vec<Result<Vec<Link>>> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..=disc.x_points).into_par_iter().map(row).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..=disc.x_points).map(row).collect()
        }
    };
    let mut out = Vec::with_capacity((disc.x_points + 1) * nt);
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// `count` lowest eigenpairs. Eigenvalues are reported in rescaled units
/// whatever the assembly units.
pub fn solve_2d(op: &MagneticOperator2D, count: usize, tol: f64) -> Result<SpectrumResult> {
    let scale = match op.units {
        Units::Rescaled => 1.0,
        Units::Physical => op.discretization.h.powf(4.0 / 3.0),
    };
    let opts = SparseSolveOptions {
        tol,
        lower_bound: op.lower_bound - 1e-10 * scale,
        preconditioner: Preconditioner::BandShiftInvert,
        ..SparseSolveOptions::default()
    };
    let report = sparse_eigensolve_smallest(&op.matrix, count, &opts)?;
    let d = &op.discretization;
    let mut s = SpectrumResult::new(
        "direct_2d",
        d.h,
        vec![d.x_points, d.t_points],
        report.eigenvalues.iter().map(|v| v / scale).collect(),
        report.residual_norms.iter().map(|r| r / scale).collect(),
    );
    s.iterations = report.iterations;
    s.eigenvectors = report.eigenvectors;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::model_by_name;
    use crate::linalg::dense_hermitian_eigen;

    fn small(h: f64, nx: usize, nt: usize) -> TubeDiscretization {
        TubeDiscretization { x_points: nx, t_points: nt, ..TubeDiscretization::with_h(h) }
    }

    #[test]
    fn flat_model_a_entries_match_closed_form() {
        let m = model_by_name("model_a").unwrap();
        let d = small(0.05, 30, 20);
        let op = assemble_2d(&m, &d, Variant::Flat).unwrap();
        let (dx, dt, hb) = (d.dx(), d.dt(), d.hbar());
        let xs = d.x_nodes();
        let ts = d.t_nodes();
        for (jx, it) in [(0, 0), (10, 7), (28, 19)] {
            let r = op.index(jx, it);
            let diag = 2.0 * hb * hb / (dx * dx) + 2.0 / (dt * dt);
            assert!((op.matrix.get(r, r).re - diag).abs() < 1e-10);
            // Ǎ = −δ ť²/2 exactly, so θ = (ť²/2ℏ)∫δ over the link.
            let (x0, x1) = (xs[jx], xs[jx + 1]);
            let mid = 0.5 * (x0 + x1);
            let g = 0.5 * dx * GAUSS2;
            let int_delta = 0.5 * dx * (m.field.delta(mid - g) + m.field.delta(mid + g));
            let theta = ts[it] * ts[it] / (2.0 * hb) * int_delta;
            let expect = C64::from_polar(-hb * hb / (dx * dx), theta);
            assert!((op.matrix.get(r, r + d.t_points) - expect).norm() < 1e-10);
            if it + 1 < d.t_points {
                assert!((op.matrix.get(r, r + 1).re + 1.0 / (dt * dt)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn curved_equals_flat_without_curvature() {
        let m = model_by_name("model_a").unwrap();
        let d = small(0.05, 25, 21);
        let a = assemble_2d(&m, &d, Variant::Flat).unwrap();
        let b = assemble_2d(&m, &d, Variant::Curved).unwrap();
        assert_eq!(a.matrix.triplets(), b.matrix.triplets());
    }

    #[test]
    fn curved_model_symmetry_defect() {
        let m = model_by_name("model_c").unwrap();
        let d = small(0.05, 120, 60).fitted_to(&m.geometry);
        let op = assemble_2d(&m, &d, Variant::Curved).unwrap();
        assert_eq!(op.matrix.dimension(), 120 * 60);
        assert!(op.symmetry_defect <= 1e-13, "{}", op.symmetry_defect);
        assert!(op.lower_bound < 0.0);
    }

    #[test]
    fn tube_overflow_rejected() {
        let m = model_by_name("model_c").unwrap();
        let err = assemble_2d(&m, &small(0.05, 10, 10), Variant::Curved).unwrap_err();
        assert!(err.to_string().contains("tubular radius"));
    }

    #[test]
    fn agmon_proxy_rejects_narrow_window() {
        let m = model_by_name("model_a").unwrap();
        let d = TubeDiscretization { x_half_width: 0.5, ..small(0.05, 10, 10) };
        assert!(assemble_2d(&m, &d, Variant::Flat).is_err());
    }

    #[test]
    fn toy_grid_matches_dense() {
        let m = model_by_name("model_c").unwrap();
        let d = small(0.05, 20, 20).fitted_to(&m.geometry);
        let op = assemble_2d(&m, &d, Variant::Curved).unwrap();
        let dense = op.matrix.to_band().to_dense();
        let (vals, _) = dense_hermitian_eigen(dense);
        let s = solve_2d(&op, 1, 1e-10).unwrap();
        assert!((s.eigenvalues[0] - vals[0]).abs() < 1e-9);
        assert!(vals[0] >= op.lower_bound - 1e-10);
    }

    #[test]
    fn physical_assembly_is_rescaled_times_h_power() {
        let m = model_by_name("model_c").unwrap();
        let d = small(0.05, 40, 30).fitted_to(&m.geometry);
        let r = solve_2d(&assemble_2d(&m, &d, Variant::Curved).unwrap(), 3, 1e-9).unwrap();
        let p = solve_2d(&assemble_in_units(&m, &d, Variant::Curved, Units::Physical).unwrap(), 3, 1e-11).unwrap();
        for (a, b) in r.eigenvalues.iter().zip(&p.eigenvalues) {
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn translation_covariance() {
        use crate::geometry::DeltaProfile;
        let base = model_by_name("model_a").unwrap();
        let d = small(0.05, 41, 25);
        let mut moved = base.clone();
        moved.field.delta = DeltaProfile::Well { base: 1.0, a: 1.0, center: d.dx() };
        let shifted = TubeDiscretization { x_center: d.dx(), ..d };
        let a = solve_2d(&assemble_2d(&base, &d, Variant::Flat).unwrap(), 3, 1e-10).unwrap();
        let b = solve_2d(&assemble_2d(&moved, &shifted, Variant::Flat).unwrap(), 3, 1e-10).unwrap();
        for (p, q) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((p - q).abs() < 1e-8, "{p} {q}");
        }
    }

    #[test]
    fn spectrum_respects_lower_bound() {
        let m = model_by_name("model_c").unwrap();
        let d = small(0.1, 40, 30).fitted_to(&m.geometry);
        let op = assemble_2d(&m, &d, Variant::Curved).unwrap();
        let s = solve_2d(&op, 4, 1e-9).unwrap();
        assert!(s.eigenvalues.iter().all(|&v| v >= op.lower_bound - 1e-10));
    }
}
