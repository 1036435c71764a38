//! Curve geometry, field profiles, the tubular gauge and assumption checks.
//!
//! Profiles are symbolic enums rather than closures so that models serialize
//! to JSON and can be declared in experiment configs.

mod catalog;
mod gauge;
mod quadrature;
mod validate;

pub use catalog::{builtin_models, model_by_name, ModelCatalogEntry};
pub use gauge::{tubular_gauge, GaugeData};
pub use quadrature::adaptive_integral;
pub use validate::{validate_assumptions, AssumptionCheck, SampleSpec, ValidationReport};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Straight,
    Parametrized,
}

/// Curvature `k(x)` of the zero locus as a function of arclength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurvatureProfile {
    Zero,
    Constant { k: f64 },
    /// `k0 / (1 + x²)`.
    Lorentzian { k0: f64 },
}

impl CurvatureProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            CurvatureProfile::Zero => 0.0,
            CurvatureProfile::Constant { k } => k,
            CurvatureProfile::Lorentzian { k0 } => k0 / (1.0 + x * x),
        }
    }

    /// `sup |k|` over the whole line.
    pub fn sup(&self) -> f64 {
        match *self {
            CurvatureProfile::Zero => 0.0,
            CurvatureProfile::Constant { k } => k.abs(),
            CurvatureProfile::Lorentzian { k0 } => k0.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveGeometry {
    pub kind: CurveKind,
    pub curvature: CurvatureProfile,
    /// Tubular radius; `None` means the tube is the whole plane (straight line).
    pub d0: Option<f64>,
    pub curvature_bound: f64,
}

impl CurveGeometry {
    pub fn straight() -> Self {
        Self { kind: CurveKind::Straight, curvature: CurvatureProfile::Zero, d0: None, curvature_bound: 0.0 }
    }

    pub fn curved(curvature: CurvatureProfile, d0: f64) -> Self {
        Self { kind: CurveKind::Parametrized, curvature, d0: Some(d0), curvature_bound: curvature.sup() }
    }

    pub fn k(&self, x: f64) -> f64 {
        self.curvature.eval(x)
    }

    pub fn tube_radius(&self) -> f64 {
        self.d0.unwrap_or(f64::INFINITY)
    }

    /// Jacobian `m(x,t) = 1 − t k(x)`.
    pub fn jacobian(&self, x: f64, t: f64) -> f64 {
        1.0 - t * self.k(x)
    }

    /// Lower bound `1 − d0·K` of the Jacobian on the tube.
    pub fn jacobian_floor(&self) -> f64 {
        match self.d0 {
            Some(d0) => 1.0 - d0 * self.curvature_bound,
            None if self.curvature_bound == 0.0 => 1.0,
            None => f64::NEG_INFINITY,
        }
    }
}

/// Transverse derivative of the field on the curve, `δ(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeltaProfile {
    Constant { value: f64 },
    /// `base + a y² / (1 + y²)` with `y = x − center`: minimum `base` at
    /// `center`, limit `base + a`.
    Well {
        base: f64,
        a: f64,
        #[serde(default)]
        center: f64,
    },
    /// `slope · x`: vanishes at the origin.
    Linear { slope: f64 },
}

impl DeltaProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            DeltaProfile::Constant { value } => value,
            DeltaProfile::Well { base, a, center } => {
                let y = x - center;
                base + a * y * y / (1.0 + y * y)
            }
            DeltaProfile::Linear { slope } => slope * x,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            DeltaProfile::Constant { .. } => 0.0,
            DeltaProfile::Well { a, center, .. } => {
                let y = x - center;
                let d = 1.0 + y * y;
                2.0 * a * y / (d * d)
            }
            DeltaProfile::Linear { slope } => slope,
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            DeltaProfile::Constant { .. } | DeltaProfile::Linear { .. } => 0.0,
            DeltaProfile::Well { a, center, .. } => {
                let y = x - center;
                let d = 1.0 + y * y;
                2.0 * a * (1.0 - 3.0 * y * y) / (d * d * d)
            }
        }
    }
}

/// Compactly supported smooth bump: 1 on `|x| ≤ plateau`, 0 beyond `support`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub plateau: f64,
    pub support: f64,
}

impl Bump {
    pub fn eval(&self, x: f64) -> f64 {
        let r = x.abs();
        if r <= self.plateau {
            return 1.0;
        }
        if r >= self.support {
            return 0.0;
        }
        let u = (r - self.plateau) / (self.support - self.plateau);
        let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
        1.0 - f(u) / (f(u) + f(1.0 - u))
    }
}

/// `c · σ(x) · t²` added to the linear part of the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticTerm {
    pub c: f64,
    pub bump: Bump,
}

/// Field in tubular coordinates: `B̃(x,t) = δ(x) t + c σ(x) t²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldProfile {
    pub delta: DeltaProfile,
    pub quadratic: Option<QuadraticTerm>,
    /// Threshold the field must exceed far out along the curve.
    pub delta_star: f64,
}

impl FieldProfile {
    pub fn b(&self, x: f64, t: f64) -> f64 {
        let mut v = self.delta.eval(x) * t;
        if let Some(q) = self.quadratic {
            v += q.c * q.bump.eval(x) * t * t;
        }
        v
    }

    pub fn dt_b(&self, x: f64, t: f64) -> f64 {
        let mut v = self.delta.eval(x);
        if let Some(q) = self.quadratic {
            v += 2.0 * q.c * q.bump.eval(x) * t;
        }
        v
    }

    pub fn delta(&self, x: f64) -> f64 {
        self.delta.eval(x)
    }

    pub fn delta_prime(&self, x: f64) -> f64 {
        self.delta.derivative(x)
    }

    /// `∂²_t B̃(x, 0)`.
    pub fn second_t_derivative(&self, x: f64) -> f64 {
        self.quadratic.map_or(0.0, |q| 2.0 * q.c * q.bump.eval(x))
    }

    /// Smallest sampled `δ` over `[−x_half, x_half]`.
    pub fn delta_min(&self, x_half: f64, samples: usize) -> f64 {
        sample_line(x_half, samples).into_iter().map(|x| self.delta(x)).fold(f64::INFINITY, f64::min)
    }
}

/// `samples` uniform points on `[−half, half]`.
pub(crate) fn sample_line(half: f64, samples: usize) -> Vec<f64> {
    if samples == 1 {
        return vec![0.0];
    }
    let step = 2.0 * half / (samples - 1) as f64;
    (0..samples).map(|i| -half + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_profile_derivatives_match_finite_differences() {
        let d = DeltaProfile::Well { base: 1.0, a: 1.0, center: 0.0 };
        for x in [-1.3, 0.0, 0.4, 2.0] {
            let h = 1e-5;
            let fd1 = (d.eval(x + h) - d.eval(x - h)) / (2.0 * h);
            let fd2 = (d.eval(x + h) - 2.0 * d.eval(x) + d.eval(x - h)) / (h * h);
            assert!((fd1 - d.derivative(x)).abs() < 1e-8);
            assert!((fd2 - d.second_derivative(x)).abs() < 1e-4);
        }
        assert_eq!(d.second_derivative(0.0), 2.0);
    }

    #[test]
    fn bump_is_one_on_plateau_and_smooth() {
        let b = Bump { plateau: 1.0, support: 3.0 };
        assert_eq!(b.eval(0.5), 1.0);
        assert_eq!(b.eval(-3.5), 0.0);
        assert!((b.eval(2.0) - 0.5).abs() < 1e-12);
        let mut prev = 1.0;
        for i in 0..200 {
            let v = b.eval(1.0 + i as f64 * 0.01);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn field_vanishes_on_curve() {
        let f = FieldProfile {
            delta: DeltaProfile::Well { base: 1.0, a: 1.0, center: 0.0 },
            quadratic: Some(QuadraticTerm { c: 0.3, bump: Bump { plateau: 1.0, support: 3.0 } }),
            delta_star: 1.9,
        };
        for x in [-4.0, 0.0, 1.7] {
            assert_eq!(f.b(x, 0.0), 0.0);
            assert_eq!(f.dt_b(x, 0.0), f.delta(x));
        }
        assert!((f.second_t_derivative(0.0) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn jacobian_floor() {
        let g = CurveGeometry::curved(CurvatureProfile::Lorentzian { k0: 0.2 }, 1.0);
        assert!((g.jacobian_floor() - 0.8).abs() < 1e-15);
        assert_eq!(CurveGeometry::straight().jacobian_floor(), 1.0);
    }
}
