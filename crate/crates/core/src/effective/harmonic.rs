use serde::{Deserialize, Serialize};

use crate::geometry::{tubular_gauge, ModelCatalogEntry};
use crate::montgomery::{band_eigenpair, band_value, eigenfunction_moment, CriticalPointData, MontgomeryGrid, Polynomial};
use crate::{Error, Result};

/// Predicted rescaled eigenvalues `λ_n(h)/h^{4/3}` for both constant candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub h: f64,
    pub hbar: f64,
    pub with_c1_closed_form: Vec<f64>,
    pub with_c1_hessian: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicPrediction {
    pub x_c: f64,
    pub xi_c: f64,
    pub nu_c: f64,
    pub mu_c: f64,
    pub mu_second: f64,
    pub delta_c: f64,
    pub delta_second: f64,
    pub alpha: f64,
    /// Finite-difference Hessian of the principal symbol at `(x_c, ξ_c)`.
    pub hessian: [[f64; 2]; 2],
    /// `(α μ_c μ''/2)^{1/2}`.
    pub c1_closed_form: f64,
    /// `½ (H_xx H_ξξ)^{1/2} / δ_c^{2/3}`.
    pub c1_hessian: f64,
    pub l_expectation: f64,
    pub lambda_table: Vec<LambdaRow>,
}

impl HarmonicPrediction {
    /// `(δ_c^{2/3} μ_c, δ_c^{2/3}(L + (2n+1) c1))`: constant and `ℏ`-coefficient.
    pub fn expansion(&self, n: usize, c1: f64) -> (f64, f64) {
        let s = self.delta_c.powf(2.0 / 3.0);
        (s * self.mu_c, s * (self.l_expectation + (2 * n + 1) as f64 * c1))
    }

    pub fn lambda_csv(&self) -> String {
        let mut s = String::from("h,hbar,n,lambda_rescaled_c1_closed_form,lambda_rescaled_c1_hessian\n");
        for row in &self.lambda_table {
            for (n, (p, q)) in row.with_c1_closed_form.iter().zip(&row.with_c1_hessian).enumerate() {
                s.push_str(&format!("{},{},{},{},{}\n", row.h, row.hbar, n, p, q));
            }
        }
        s
    }
}

/// Minimizer of `δ` on `[−6, 6]`; it must be unique and nondegenerate.
fn well_bottom(model: &ModelCatalogEntry) -> Result<f64> {
    let f = |x: f64| model.field.delta(x);
    let xs: Vec<f64> = (0..=1200).map(|i| -6.0 + i as f64 * 0.01).collect();
    let minima: Vec<usize> = (1..xs.len() - 1).filter(|&i| f(xs[i]) <= f(xs[i - 1]) && f(xs[i]) < f(xs[i + 1])).collect();
    if minima.len() != 1 {
        return Err(Error::Precondition(format!(
            "model {}: δ needs exactly one interior minimum, found {}",
            model.name,
            minima.len()
        )));
    }
    let (mut a, mut b) = (xs[minima[0] - 1], xs[minima[0] + 1]);
    const G: f64 = 0.618_033_988_749_894_9;
    while b - a > 1e-12 {
        let (c, d) = (b - G * (b - a), a + G * (b - a));
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(0.5 * (a + b))
}

/// Harmonic-well predictions at the bottom of the band-1 symbol.
pub fn harmonic_prediction(
    model: &ModelCatalogEntry,
    critical: &CriticalPointData,
    h_list: &[f64],
    levels: usize,
    grid: &MontgomeryGrid,
) -> Result<HarmonicPrediction> {
    if critical.band != 1 {
        return Err(Error::Precondition("harmonic predictions use the band-1 critical point".into()));
    }
    let x_c = well_bottom(model)?;
    let delta = |x: f64| model.field.delta(x);
    let delta_c = delta(x_c);
    let e = 1e-3;
    let delta_second =
        (-delta(x_c + 2.0 * e) + 16.0 * delta(x_c + e) - 30.0 * delta_c + 16.0 * delta(x_c - e) - delta(x_c - 2.0 * e))
            / (12.0 * e * e);
    let alpha = delta_second / (2.0 * delta_c);
    if !(alpha > 0.0) {
        return Err(Error::Precondition(format!("degenerate minimum: δ''(x_c) = {delta_second}")));
    }
    let nu_c = critical.nu_c;
    let s = 1e-2;
    let xi_c = nu_c * delta_c.powf(1.0 / 3.0);

    let symbol = |x: f64, xi: f64| -> Result<f64> {
        let d = delta(x);
        Ok(d.powf(2.0 / 3.0) * band_value(1, xi * d.powf(-1.0 / 3.0), grid)?)
    };
    let second = |f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        Ok((-f(2.0 * s)? + 16.0 * f(s)? - 30.0 * f(0.0)? + 16.0 * f(-s)? - f(-2.0 * s)?) / (12.0 * s * s))
    };
    let hxx = second(&|e| symbol(x_c + e, xi_c))?;
    let hyy = second(&|e| symbol(x_c, xi_c + e))?;
    let cross = |e: f64| -> Result<f64> {
        Ok((symbol(x_c + e, xi_c + e)? - symbol(x_c + e, xi_c - e)? - symbol(x_c - e, xi_c + e)? + symbol(x_c - e, xi_c - e)?)
            / (4.0 * e * e))
    };
    let hxy = (4.0 * cross(s)? - cross(2.0 * s)?) / 3.0;
    let hessian = [[hxx, hxy], [hxy, hyy]];
    let tr = hxx + hyy;
    let det = hxx * hyy - hxy * hxy;
    let lowest = 0.5 * (tr - (tr * tr - 4.0 * det).max(0.0).sqrt());
    if !(lowest > 0.0) {
        return Err(Error::Precondition(format!("degenerate minimum: Hessian eigenvalue {lowest:.3e} ≤ 0")));
    }

    let mu_c = critical.mu_c;
    let mu_second = critical.curvature;
    let c1_closed_form = (alpha * mu_c * mu_second / 2.0).sqrt();
    let c1_hessian = 0.5 * (hxx * hyy).sqrt() / delta_c.powf(2.0 / 3.0);

    let kappa = tubular_gauge(&model.field, &model.geometry)?.kappa(x_c);
    let k = model.geometry.k(x_c);
    let a = 2.0 * delta_c.powf(-4.0 / 3.0) * kappa;
    let b = 2.0 * delta_c.powf(-1.0 / 3.0) * k;
    // a (t²/2 − ν) t³ + b (ν − t²/2)² t
    let weight = Polynomial::new(vec![0.0, b * nu_c * nu_c, 0.0, -a * nu_c - b * nu_c, 0.0, 0.5 * a + 0.25 * b]);
    let pair = band_eigenpair(1, nu_c, grid)?;
    let l_expectation = eigenfunction_moment(&pair, &weight, 0)?;

    let mut prediction = HarmonicPrediction {
        x_c,
        xi_c,
        nu_c,
        mu_c,
        mu_second,
        delta_c,
        delta_second,
        alpha,
        hessian,
        c1_closed_form,
        c1_hessian,
        l_expectation,
        lambda_table: Vec::new(),
    };
    for &h in h_list {
        let hbar = h.cbrt();
        let row = |c1: f64| -> Vec<f64> {
            (0..levels)
                .map(|n| {
                    let (c0, c) = prediction.expansion(n, c1);
                    c0 + hbar * c
                })
                .collect()
        };
        let r = LambdaRow { h, hbar, with_c1_closed_form: row(c1_closed_form), with_c1_hessian: row(c1_hessian) };
        prediction.lambda_table.push(r);
    }
    Ok(prediction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::{EffectiveSymbol, SymbolOptions};
    use crate::geometry::model_by_name;
    use crate::montgomery::reference_critical_point;

    fn predict(name: &str) -> HarmonicPrediction {
        let c = reference_critical_point().unwrap();
        harmonic_prediction(&model_by_name(name).unwrap(), &c, &[0.05, 0.01], 3, &MontgomeryGrid::default()).unwrap()
    }

    #[test]
    fn model_a_hessian_is_diagonal_with_expected_entries() {
        let p = predict("model_a");
        let [[hxx, hxy], [_, hyy]] = p.hessian;
        let norm = (hxx * hxx + hyy * hyy + 2.0 * hxy * hxy).sqrt();
        assert!(hxy.abs() <= 1e-6 * norm);
        let want_xx = 2.0 / 3.0 * p.delta_second * p.delta_c.powf(-1.0 / 3.0) * p.mu_c;
        assert!(((hxx - want_xx) / want_xx).abs() < 1e-4, "{hxx} vs {want_xx}");
        assert!(((hyy - p.mu_second) / p.mu_second).abs() < 1e-4, "{hyy} vs {}", p.mu_second);
    }

    #[test]
    fn model_a_constants() {
        let p = predict("model_a");
        assert!(p.x_c.abs() < 1e-6);
        assert!((p.alpha - 1.0).abs() < 1e-8);
        assert!(p.c1_closed_form > 0.0 && p.c1_hessian > 0.0);
        // The two constructions differ by √(3/2) when δ_c = 1.
        assert!((p.c1_closed_form / p.c1_hessian - 1.5f64.sqrt()).abs() < 1e-4);
        assert_eq!(p.l_expectation.abs() < 1e-12, true);
        let row = &p.lambda_table[1];
        assert!((row.with_c1_hessian[1] - row.with_c1_hessian[0] - 2.0 * row.hbar * p.c1_hessian).abs() < 1e-12);
        assert_eq!(p.lambda_csv().lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn model_b_first_order_symbol_matches_l_expectation() {
        let m = model_by_name("model_b").unwrap();
        let p = predict("model_b");
        let opts = SymbolOptions { nu_range: (-1.0, 2.0), moment_step: 0.1, ..SymbolOptions::default() };
        let s = EffectiveSymbol::new(&m, 1, &opts).unwrap();
        let sub = s.subprincipal(p.x_c, p.xi_c).unwrap();
        assert!((sub - p.delta_c.powf(2.0 / 3.0) * p.l_expectation).abs() < 1e-5);
    }

    #[test]
    fn flat_field_has_no_well() {
        let c = reference_critical_point().unwrap();
        let err = harmonic_prediction(&model_by_name("model_a_flat").unwrap(), &c, &[0.1], 1, &MontgomeryGrid::default());
        assert!(matches!(err, Err(Error::Precondition(_))));
    }
}
