use serde::{Deserialize, Serialize};

use super::MagneticOperator2D;
use crate::montgomery::reference_critical_point;
use crate::spectrum::SpectrumResult;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub index: usize,
    pub energy: f64,
    /// Fitted `α` in `ρ(ť) ~ e^{−α|ť|}`, `ρ` the transverse marginal.
    pub transverse_decay_rate: f64,
    /// Mass fraction at `x` outside `{δ(x)^{2/3} μ_c ≤ energy_cut}`.
    pub tangential_mass_outside: f64,
    /// `sqrt(⟨(x − ⟨x⟩)²⟩)` of the tangential marginal.
    pub tangential_rms_width: f64,
}

/// Decay and localization of every eigenpair at or below `energy_cut`.
///
/// The transverse rate is a least-squares fit of `log ρ` against `|ť|`,
/// `ρ(ť)² = Σ_x |ψ(x,ť)|²`, over the points with `ρ ∈ [1e-10, 1e-2]·max ρ`.
pub fn localization_diagnostics(
    op: &MagneticOperator2D,
    spectrum: &SpectrumResult,
    energy_cut: f64,
) -> Result<Vec<LocalizationReport>> {
    let vectors = spectrum
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::Precondition("spectrum carries no eigenvectors".into()))?;
    let d = &op.discretization;
    let (nx, nt) = (d.x_points, d.t_points);
    if vectors.nrows() != nx * nt {
        return Err(Error::Precondition("eigenvectors do not match the operator grid".into()));
    }
    let mu_c = reference_critical_point()?.mu_c;
    let xs = d.x_nodes();
    let ts = d.t_nodes();
    let inside: Vec<bool> = xs
        .iter()
        .map(|&x| {
            let delta = op.model.field.delta(x);
            delta > 0.0 && delta.powf(2.0 / 3.0) * mu_c <= energy_cut
        })
        .collect();

    let mut out = Vec::new();
    for (n, &energy) in spectrum.eigenvalues.iter().enumerate() {
        if energy > energy_cut {
            continue;
        }
        let col = vectors.column(n);
        let mut transverse = vec![0.0; nt];
        let mut tangential = vec![0.0; nx];
        for jx in 0..nx {
            for it in 0..nt {
                let p = col[jx * nt + it].norm_sqr();
                transverse[it] += p;
                tangential[jx] += p;
            }
        }
        let total: f64 = tangential.iter().sum();
        let rho: Vec<f64> = transverse.iter().map(|p| p.sqrt()).collect();
        let peak = rho.iter().cloned().fold(0.0, f64::max);
        let pts: Vec<(f64, f64)> = rho
            .iter()
            .zip(&ts)
            .filter(|(&r, _)| r >= 1e-10 * peak && r <= 1e-2 * peak)
            .map(|(&r, &t)| (t.abs(), r.ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Diagnostic(format!(
                "eigenpair {}: only {} transverse points in the fit window; widen or refine the ť grid",
                n + 1,
                pts.len()
            )));
        }
        let rate = -least_squares_slope(&pts);
        let outside: f64 = tangential.iter().zip(&inside).filter(|(_, &i)| !i).map(|(p, _)| p).sum();
        let mean: f64 = tangential.iter().zip(&xs).map(|(p, x)| p * x).sum::<f64>() / total;
        let var: f64 = tangential.iter().zip(&xs).map(|(p, x)| p * (x - mean).powi(2)).sum::<f64>() / total;
        out.push(LocalizationReport {
            index: n + 1,
            energy,
            transverse_decay_rate: rate,
            tangential_mass_outside: outside / total,
            tangential_rms_width: var.sqrt(),
        });
    }
    Ok(out)
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::model_by_name;
    use crate::magnetic2d::{assemble_2d, solve_2d, TubeDiscretization, Variant};

    #[test]
    fn slope_fit_is_exact_on_a_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 1.5 * i as f64)).collect();
        assert!((least_squares_slope(&pts) + 1.5).abs() < 1e-14);
    }

    #[test]
    fn ground_state_decays_and_flat_delta_spreads() {
        let d = TubeDiscretization { x_points: 61, t_points: 61, ..TubeDiscretization::with_h(0.05) };
        let a = model_by_name("model_a").unwrap();
        let op = assemble_2d(&a, &d, Variant::Flat).unwrap();
        let s = solve_2d(&op, 1, 1e-8).unwrap();
        let r = &localization_diagnostics(&op, &s, 0.9).unwrap()[0];
        assert!(r.transverse_decay_rate > 0.0);
        assert!(r.tangential_rms_width < 0.2 * d.x_half_width, "{}", r.tangential_rms_width);

        let flat = model_by_name("model_a_flat").unwrap();
        let d = TubeDiscretization { energy_top: 0.45, ..d };
        let op = assemble_2d(&flat, &d, Variant::Flat).unwrap();
        let s = solve_2d(&op, 1, 1e-8).unwrap();
        let r = &localization_diagnostics(&op, &s, 0.9).unwrap()[0];
        // Dirichlet ground state cos(πx/2X) has rms width X·sqrt(1/3 − 2/π²).
        let expect = d.x_half_width * (1.0 / 3.0 - 2.0 / std::f64::consts::PI.powi(2)).sqrt();
        assert!((r.tangential_rms_width - expect).abs() < 0.1 * expect, "{}", r.tangential_rms_width);
    }

    #[test]
    fn missing_vectors_rejected() {
        let d = TubeDiscretization { x_points: 11, t_points: 11, ..TubeDiscretization::with_h(0.05) };
        let op = assemble_2d(&model_by_name("model_a").unwrap(), &d, Variant::Flat).unwrap();
        let s = SpectrumResult::new("x", 0.05, vec![], vec![0.7], vec![0.0]);
        assert!(localization_diagnostics(&op, &s, 1.0).is_err());
    }
}
