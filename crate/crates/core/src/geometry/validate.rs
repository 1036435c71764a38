use serde::{Deserialize, Serialize};

use super::{sample_line, ModelCatalogEntry};

/// Sample grid used for assumption checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub x_half_width: f64,
    pub x_samples: usize,
    /// Transverse half-width, clipped to the tube radius.
    pub t_half_width: f64,
    pub t_samples: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self { x_half_width: 6.0, x_samples: 2001, t_half_width: 1.0, t_samples: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub id: String,
    pub description: String,
    /// `None` when the check does not apply to this kind of model.
    pub passed: Option<bool>,
    pub witnesses: Vec<(f64, f64)>,
    pub constants: Vec<(String, f64)>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub model: String,
    pub samples: SampleSpec,
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }

    pub fn check(&self, id: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.checks.iter().flat_map(|c| &c.constants).find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

const MAX_WITNESSES: usize = 5;

fn check(id: &str, description: &str, passed: bool) -> AssumptionCheck {
    AssumptionCheck {
        id: id.into(),
        description: description.into(),
        passed: Some(passed),
        witnesses: Vec::new(),
        constants: Vec::new(),
        note: None,
    }
}

/// Keep the failing points closest to the boundary of failure.
fn witnesses(mut failures: Vec<(f64, f64, f64)>) -> Vec<(f64, f64)> {
    failures.sort_by(|a, b| a.2.abs().total_cmp(&b.2.abs()).then(a.0.abs().total_cmp(&b.0.abs())));
    failures.into_iter().take(MAX_WITNESSES).map(|(x, t, _)| (x, t)).collect()
}

/// Check the standing hypotheses on a finite sample grid. Failures are
/// report content; the sweep is sequential and deterministic.
pub fn validate_assumptions(entry: &ModelCatalogEntry, spec: &SampleSpec) -> ValidationReport {
    let geom = &entry.geometry;
    let field = &entry.field;
    let xs = sample_line(spec.x_half_width, spec.x_samples.max(2));
    let t_half = spec.t_half_width.min(geom.tube_radius());
    let ts = sample_line(t_half, spec.t_samples.max(2));
    let mut checks = Vec::new();

    // Tube.
    let k_max = xs.iter().map(|&x| geom.k(x).abs()).fold(0.0, f64::max);
    let m0 = geom.jacobian_floor();
    let mut c = check(
        "tube_diffeomorphism",
        "|k| ≤ K on samples and d0·K < 1 so the Jacobian stays positive",
        k_max <= geom.curvature_bound + 1e-15 && m0 > 0.0,
    );
    if c.passed == Some(false) {
        let worst = xs.iter().copied().max_by(|a, b| geom.k(*a).abs().total_cmp(&geom.k(*b).abs())).unwrap_or(0.0);
        c.witnesses.push((worst, geom.tube_radius()));
    }
    c.constants = vec![("K".into(), k_max), ("m0".into(), m0)];
    checks.push(c);

    checks.push(AssumptionCheck {
        id: "outside_field_bound".into(),
        description: "field bounded below away from the tube".into(),
        passed: None,
        witnesses: Vec::new(),
        constants: Vec::new(),
        note: Some("not applicable: Dirichlet truncation substitutes for confinement outside the tube".into()),
    });

    // Zero locus.
    let off: Vec<(f64, f64, f64)> =
        xs.iter().map(|&x| (x, 0.0, field.b(x, 0.0))).filter(|p| p.2 != 0.0).collect();
    let mut c = check("field_vanishes_on_curve", "B̃(x,0) = 0", off.is_empty());
    c.witnesses = witnesses(off);
    checks.push(c);

    // Transverse gradient.
    let mut delta0 = f64::INFINITY;
    let mut bad = Vec::new();
    for &x in &xs {
        for &t in &ts {
            let v = field.dt_b(x, t);
            delta0 = delta0.min(v);
            if v <= 0.0 {
                bad.push((x, t, v));
            }
        }
    }
    let mut c = check("transverse_field_positive", "∂_t B̃ > δ0 > 0 on the sampled tube", bad.is_empty());
    c.witnesses = witnesses(bad);
    c.constants = vec![("delta0".into(), delta0)];
    checks.push(c);

    // Oscillation control.
    let mut c_delta: f64 = 0.0;
    let mut bad = Vec::new();
    for &x in &xs {
        let d = field.delta(x);
        if d > 0.0 {
            c_delta = c_delta.max(field.delta_prime(x).abs() / d.powf(2.0 / 3.0));
        } else {
            bad.push((x, 0.0, d));
        }
    }
    if !bad.is_empty() {
        c_delta = f64::INFINITY;
    }
    let mut c = check("controlled_oscillation", "|δ'| ≤ Cδ δ^(2/3) on samples", bad.is_empty());
    c.witnesses = witnesses(bad);
    c.constants = vec![("C_delta".into(), c_delta)];
    checks.push(c);

    // Far field.
    let n = xs.len();
    let edge = 10.min(n / 2);
    let outer: Vec<f64> = xs[..edge].iter().chain(&xs[n - edge..]).copied().collect();
    let bad: Vec<(f64, f64, f64)> = outer
        .iter()
        .map(|&x| (x, 0.0, field.delta(x) - field.delta_star))
        .filter(|p| p.2 <= 0.0)
        .collect();
    let mut c = check("far_field_above_threshold", "δ > δ* at the outermost samples on each side", bad.is_empty());
    c.witnesses = witnesses(bad);
    c.constants = vec![("delta_star".into(), field.delta_star)];
    checks.push(c);

    // Third-order gauge coefficient.
    let mut c_kappa: f64 = 0.0;
    let mut bad = Vec::new();
    for &x in &xs {
        let d = field.delta(x);
        let kappa = field.second_t_derivative(x) / 6.0 - geom.k(x) * d / 3.0;
        if d > 0.0 {
            c_kappa = c_kappa.max(kappa.abs() / d);
        } else if kappa != 0.0 || d < 0.0 {
            bad.push((x, 0.0, d));
        }
    }
    if !bad.is_empty() {
        c_kappa = f64::INFINITY;
    }
    let mut c = check("third_order_gauge_controlled", "|κ| ≤ Cκ δ on samples", bad.is_empty());
    c.witnesses = witnesses(bad);
    c.constants = vec![("C_kappa".into(), c_kappa)];
    checks.push(c);

    // Well: unique nondegenerate minimum of δ.
    let (imin, dmin) =
        xs.iter().enumerate().map(|(i, &x)| (i, field.delta(x))).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let ties = xs.iter().filter(|&&x| field.delta(x) <= dmin + 1e-12).count();
    let curvature = if imin > 0 && imin + 1 < n {
        let h = xs[1] - xs[0];
        (field.delta(xs[imin + 1]) - 2.0 * dmin + field.delta(xs[imin - 1])) / (h * h)
    } else {
        0.0
    };
    let ok = ties == 1 && imin > 0 && imin + 1 < n && curvature > 1e-8;
    let mut c = check("unique_nondegenerate_minimum", "δ has one interior minimum with δ'' > 0", ok);
    if !ok {
        c.witnesses.push((xs[imin], 0.0));
    }
    c.constants = vec![("delta_min".into(), dmin), ("x_min".into(), xs[imin]), ("delta_second".into(), curvature)];
    checks.push(c);

    ValidationReport { model: entry.name.clone(), samples: *spec, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin_models, model_by_name};

    #[test]
    fn model_a_passes_with_unit_floor() {
        let r = validate_assumptions(&model_by_name("model_a").unwrap(), &SampleSpec::default());
        assert!(r.all_pass(), "{r:#?}");
        assert!((r.constant("delta0").unwrap() - 1.0).abs() < 1e-12);
        let cd = r.constant("C_delta").unwrap();
        assert!(cd.is_finite() && cd > 0.0);
        assert_eq!(r.check("outside_field_bound").unwrap().passed, None);
    }

    #[test]
    fn vanishing_delta_fails_at_origin() {
        let r = validate_assumptions(&model_by_name("linear_delta").unwrap(), &SampleSpec::default());
        let c = r.check("transverse_field_positive").unwrap();
        assert_eq!(c.passed, Some(false));
        assert_eq!(c.witnesses[0].0, 0.0);
    }

    #[test]
    fn flat_delta_has_no_well() {
        let r = validate_assumptions(&model_by_name("model_a_flat").unwrap(), &SampleSpec::default());
        assert_eq!(r.check("unique_nondegenerate_minimum").unwrap().passed, Some(false));
        assert_eq!(r.check("transverse_field_positive").unwrap().passed, Some(true));
    }

    #[test]
    fn catalog_constants() {
        let r = validate_assumptions(&model_by_name("model_c").unwrap(), &SampleSpec::default());
        assert!(r.all_pass());
        assert!((r.constant("m0").unwrap() - 0.8).abs() < 1e-12);
        let r = validate_assumptions(&model_by_name("model_b").unwrap(), &SampleSpec::default());
        assert!(r.all_pass(), "{r:#?}");
        assert!(r.constant("C_kappa").unwrap() >= 0.1 - 1e-12);
    }

    #[test]
    fn deterministic() {
        for e in builtin_models() {
            let s = SampleSpec { x_samples: 301, ..SampleSpec::default() };
            assert_eq!(validate_assumptions(&e, &s), validate_assumptions(&e, &s));
        }
    }
}
