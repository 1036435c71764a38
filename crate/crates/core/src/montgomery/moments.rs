use serde::{Deserialize, Serialize};

use super::{montgomery_spectrum, trapezoid, MontgomeryEigenpair, MontgomeryGrid};
use crate::{Error, Result};

/// Polynomial in `t` with ascending coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    pub fn monomial(degree: usize) -> Self {
        let mut coeffs = vec![0.0; degree + 1];
        coeffs[degree] = 1.0;
        Self::new(coeffs)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }
}

/// `∫ u · w(t) · ∂^order u dt` by the trapezoid rule, with a centered
/// difference for the derivative and zero values beyond the grid.
///
/// When the pair carries its coarse-grid twin the two quadratures are
/// Richardson-combined, matching the accuracy of the eigenvalue.
pub fn eigenfunction_moment(pair: &MontgomeryEigenpair, weight: &Polynomial, derivative_order: u8) -> Result<f64> {
    if weight.degree() > 6 {
        return Err(Error::Precondition(format!("weight degree {} exceeds 6", weight.degree())));
    }
    if derivative_order > 1 {
        return Err(Error::Precondition("derivative order must be 0 or 1".into()));
    }
    let fine = grid_moment(&pair.function, pair.spacing, weight, derivative_order);
    if pair.coarse_function.is_empty() {
        return Ok(fine);
    }
    let coarse = grid_moment(&pair.coarse_function, 2.0 * pair.spacing, weight, derivative_order);
    Ok((4.0 * fine - coarse) / 3.0)
}

fn grid_moment(u: &[f64], dt: f64, weight: &Polynomial, derivative_order: u8) -> f64 {
    let n = u.len();
    let c = (n - 1) / 2;
    let at = |i: isize| if i < 0 || i as usize >= n { 0.0 } else { u[i as usize] };
    let integrand: Vec<f64> = (0..n)
        .map(|i| {
            let t = (i as f64 - c as f64) * dt;
            let right = if derivative_order == 0 {
                u[i]
            } else {
                (at(i as isize + 1) - at(i as isize - 1)) / (2.0 * dt)
            };
            u[i] * weight.eval(t) * right
        })
        .collect();
    trapezoid(&integrand, dt)
}

/// `∂_ν u_k` by central differences, sign-aligning the neighbors with `u_k(ν)`.
pub fn eigenpair_nu_derivative(k: usize, nu: f64, step: f64, grid: &MontgomeryGrid) -> Result<Vec<f64>> {
    if !(1e-5..=1e-2).contains(&step) {
        return Err(Error::Precondition(format!("step {step} outside [1e-5, 1e-2]")));
    }
    let center = nth_pair(k, nu, grid)?;
    let plus = nth_pair(k, nu + step, grid)?;
    let minus = nth_pair(k, nu - step, grid)?;
    let align = |p: MontgomeryEigenpair| -> Vec<f64> {
        let ip: f64 = p.function.iter().zip(&center.function).map(|(a, b)| a * b).sum();
        if ip < 0.0 {
            p.function.iter().map(|v| -v).collect()
        } else {
            p.function
        }
    };
    let (up, um) = (align(plus), align(minus));
    Ok(up.iter().zip(&um).map(|(a, b)| (a - b) / (2.0 * step)).collect())
}

fn nth_pair(k: usize, nu: f64, grid: &MontgomeryGrid) -> Result<MontgomeryEigenpair> {
    if k == 0 {
        return Err(Error::Precondition("bands are numbered from 1".into()));
    }
    Ok(montgomery_spectrum(nu, k, grid)?.pop().expect("k ≥ 1 pairs"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montgomery::{find_critical_point, potential_nu_derivative};

    fn l2(v: &[f64], dt: f64) -> f64 {
        trapezoid(&v.iter().map(|x| x * x).collect::<Vec<_>>(), dt).sqrt()
    }

    #[test]
    fn basic_moments() {
        let g = MontgomeryGrid::default();
        let pair = &montgomery_spectrum(0.0, 1, &g).unwrap()[0];
        assert!((eigenfunction_moment(pair, &Polynomial::constant(1.0), 0).unwrap() - 1.0).abs() < 1e-10);
        assert!(eigenfunction_moment(pair, &Polynomial::monomial(1), 0).unwrap().abs() < 1e-9);
        assert!(eigenfunction_moment(pair, &Polynomial::constant(1.0), 1).unwrap().abs() < 1e-9);
        assert!(eigenfunction_moment(pair, &Polynomial::monomial(7), 0).is_err());
    }

    #[test]
    fn odd_moments_vanish_for_every_parameter() {
        let g = MontgomeryGrid::default();
        for nu in [-1.0, 0.35, 2.0] {
            for pair in montgomery_spectrum(nu, 2, &g).unwrap() {
                for d in [1, 3, 5] {
                    assert!(eigenfunction_moment(&pair, &Polynomial::monomial(d), 0).unwrap().abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kinetic_moment_matches_eigenvalue_identity() {
        // ⟨u, t u'⟩ = −1/2 for a normalized decaying function.
        let g = MontgomeryGrid::default();
        let pair = &montgomery_spectrum(0.7, 1, &g).unwrap()[0];
        let m = eigenfunction_moment(pair, &Polynomial::monomial(1), 1).unwrap();
        assert!((m + 0.5).abs() < 1e-6, "{m}");
    }

    #[test]
    fn nu_derivative_is_orthogonal_and_step_stable() {
        let g = MontgomeryGrid::default();
        let dt = g.spacing();
        let u = &montgomery_spectrum(0.5, 1, &g).unwrap()[0].function;
        let du = eigenpair_nu_derivative(1, 0.5, 1e-3, &g).unwrap();
        let ip = trapezoid(&u.iter().zip(&du).map(|(a, b)| a * b).collect::<Vec<_>>(), dt);
        assert!(ip.abs() < 1e-6);
        let du2 = eigenpair_nu_derivative(1, 0.5, 5e-4, &g).unwrap();
        let diff: Vec<f64> = du.iter().zip(&du2).map(|(a, b)| a - b).collect();
        assert!(l2(&diff, dt) <= 1e-5);
        assert!(eigenpair_nu_derivative(1, 0.5, 0.1, &g).is_err());
    }

    #[test]
    fn hellmann_feynman_vanishes_at_critical_point() {
        let g = MontgomeryGrid::default();
        let cp = find_critical_point(1, (0.0, 1.0), &g).unwrap();
        let pair = &montgomery_spectrum(cp.nu_c, 1, &g).unwrap()[0];
        let w = Polynomial::new(vec![2.0 * cp.nu_c, 0.0, -1.0]);
        assert!((w.eval(1.3) - potential_nu_derivative(cp.nu_c, 1.3)).abs() < 1e-14);
        let hf = eigenfunction_moment(pair, &w, 0).unwrap();
        assert!(hf.abs() < 1e-7, "{hf}");
    }
}
