use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Bump, CurvatureProfile, CurveGeometry, DeltaProfile, FieldProfile, QuadraticTerm};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawEntry {
    name: String,
    geometry: CurveGeometry,
    field: FieldProfile,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
}

/// Named model. Construction (and deserialization) rejects geometries whose
/// tube is not a diffeomorphism; field hypotheses are left to
/// [`validate_assumptions`](super::validate_assumptions).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEntry", into = "RawEntry")]
pub struct ModelCatalogEntry {
    pub name: String,
    pub geometry: CurveGeometry,
    pub field: FieldProfile,
    pub parameters: BTreeMap<String, f64>,
}

impl ModelCatalogEntry {
    pub fn new(
        name: &str,
        geometry: CurveGeometry,
        field: FieldProfile,
        parameters: &[(&str, f64)],
    ) -> Result<Self> {
        let m0 = geometry.jacobian_floor();
        if !(m0 > 0.0) {
            return Err(Error::Precondition(format!(
                "model {name}: tube_diffeomorphism fails, d0·K = {} ≥ 1",
                1.0 - m0
            )));
        }
        if geometry.curvature.sup() > geometry.curvature_bound + 1e-15 {
            return Err(Error::Precondition(format!("model {name}: curvature exceeds its declared bound")));
        }
        Ok(Self {
            name: name.into(),
            geometry,
            field,
            parameters: parameters.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        })
    }
}

impl TryFrom<RawEntry> for ModelCatalogEntry {
    type Error = Error;
    fn try_from(r: RawEntry) -> Result<Self> {
        let params: Vec<(&str, f64)> = r.parameters.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        ModelCatalogEntry::new(&r.name, r.geometry, r.field, &params)
    }
}

impl From<ModelCatalogEntry> for RawEntry {
    fn from(e: ModelCatalogEntry) -> Self {
        RawEntry { name: e.name, geometry: e.geometry, field: e.field, parameters: e.parameters }
    }
}

const BUMP: Bump = Bump { plateau: 1.0, support: 3.0 };

fn well(a: f64) -> FieldProfile {
    FieldProfile { delta: DeltaProfile::Well { base: 1.0, a, center: 0.0 }, quadratic: None, delta_star: 1.0 + 0.9 * a }
}

/// Built-in models, in a fixed order: the three working models first.
pub fn builtin_models() -> Vec<ModelCatalogEntry> {
    let a = 1.0;
    let c = 0.3;
    let k0 = 0.2;
    let mut b_geom = CurveGeometry::straight();
    // Keeps ∂_t B̃ ≥ 1 − 2c·1.5 = 0.1 on the tube.
    b_geom.d0 = Some(1.5);
    vec![
        ModelCatalogEntry::new("model_a", CurveGeometry::straight(), well(a), &[("a", a)]),
        ModelCatalogEntry::new(
            "model_b",
            b_geom,
            FieldProfile { quadratic: Some(QuadraticTerm { c, bump: BUMP }), ..well(a) },
            &[("a", a), ("c", c)],
        ),
        ModelCatalogEntry::new(
            "model_c",
            CurveGeometry::curved(CurvatureProfile::Lorentzian { k0 }, 1.0),
            well(a),
            &[("a", a), ("k0", k0), ("d0", 1.0)],
        ),
        ModelCatalogEntry::new(
            "model_a_flat",
            CurveGeometry::straight(),
            FieldProfile { delta_star: 0.9, ..well(0.0) },
            &[("a", 0.0)],
        ),
        ModelCatalogEntry::new(
            "linear_delta",
            CurveGeometry::straight(),
            FieldProfile { delta: DeltaProfile::Linear { slope: 1.0 }, quadratic: None, delta_star: 0.5 },
            &[("slope", 1.0)],
        ),
    ]
    .into_iter()
    .map(|r| r.expect("built-in models register"))
    .collect()
}

pub fn model_by_name(name: &str) -> Result<ModelCatalogEntry> {
    builtin_models()
        .into_iter()
        .find(|m| m.name == name)
        .ok_or_else(|| Error::Config(format!("unknown model '{name}'")))
}
