//! Experiment configuration: a TOML document with typed sections.
//!
//! Unknown keys are rejected at every level. The grammar, with defaults:
//!
//! ```toml
//! [model]
//! name = "model_a"            # catalog name; add geometry/field for an inline model
//!
//! [run]
//! h_list = [0.05, 0.02, 0.01] # strictly decreasing, each in (0, 1)
//! bands = 1                   # upper bound on the number of effective bands
//! energy_window = [0.5, 0.67] # rescaled units
//! levels = 5                  # eigenpairs requested from the 2D solver
//!
//! [montgomery]                # fiber grid
//! half_width = 10.0
//! points = 2001
//!
//! [effective]
//! nu_range = [-12.0, 12.0]
//! x_window = [-4.0, 4.0]
//! tolerance = 1e-8
//! moment_step = 0.05
//! curve_range = [-2.0, 4.0]
//! curve_samples = 241
//! action_samples = 17
//! symbol_grid = [81, 81]
//! # modes = 128              # plane waves; chosen from ℏ when absent
//!
//! [discretization]            # 2D tube grid, rescaled variables
//! x_half_width = 6.0
//! x_points = 301
//! t_half_width = 8.0
//! t_points = 121
//! energy_top = 0.74
//! variant = "curved"
//!
//! [solver]
//! tolerance = 1e-10
//! # cluster_tol = 1e-9        # defaults to 10 × tolerance
//!
//! [outputs]
//! directory = "runs"
//! emit_plots = true
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{model_by_name, CurveGeometry, FieldProfile, ModelCatalogEntry};
use crate::magnetic2d::{TubeDiscretization, Variant};
use crate::montgomery::{reference_critical_point, MontgomeryGrid};
use crate::{Error, Result};

/// Gap kept between the top of the energy window and `δ_*^{2/3} μ_c`.
pub const ENERGY_MARGIN: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<CurveGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldProfile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub h_list: Vec<f64>,
    pub bands: usize,
    pub energy_window: (f64, f64),
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_levels() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MontgomerySection {
    pub half_width: f64,
    pub points: usize,
}

impl Default for MontgomerySection {
    fn default() -> Self {
        let g = MontgomeryGrid::default();
        Self { half_width: g.half_width, points: g.points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveSection {
    pub nu_range: (f64, f64),
    pub x_window: (f64, f64),
    pub tolerance: f64,
    pub moment_step: f64,
    pub curve_range: (f64, f64),
    pub curve_samples: usize,
    pub action_samples: usize,
    pub symbol_grid: (usize, usize),
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
}

impl Default for EffectiveSection {
    fn default() -> Self {
        Self {
            nu_range: (-12.0, 12.0),
            x_window: (-4.0, 4.0),
            tolerance: 1e-8,
            moment_step: 0.05,
            curve_range: (-2.0, 4.0),
            curve_samples: 241,
            action_samples: 17,
            symbol_grid: (81, 81),
            modes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationSection {
    pub x_half_width: f64,
    pub x_points: usize,
    pub t_half_width: f64,
    pub t_points: usize,
    pub energy_top: f64,
    pub variant: Variant,
}

impl Default for DiscretizationSection {
    fn default() -> Self {
        let d = TubeDiscretization::default();
        Self {
            x_half_width: d.x_half_width,
            x_points: d.x_points,
            t_half_width: d.t_half_width,
            t_points: d.t_points,
            energy_top: d.energy_top,
            variant: Variant::Curved,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_tol: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tolerance: 1e-10, cluster_tol: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    #[serde(default = "default_true")]
    pub emit_plots: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub run: RunSection,
    #[serde(default)]
    pub montgomery: MontgomerySection,
    #[serde(default)]
    pub effective: EffectiveSection,
    #[serde(default)]
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub outputs: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Catalog entry, or the inline model when geometry and field are given.
    pub fn resolve_model(&self) -> Result<ModelCatalogEntry> {
        let m = &self.model;
        match (&m.geometry, &m.field) {
            (None, None) if m.parameters.is_empty() => model_by_name(&m.name),
            (Some(g), Some(f)) => {
                let params: Vec<(&str, f64)> = m.parameters.iter().map(|(k, v)| (k.as_str(), *v)).collect();
                ModelCatalogEntry::new(&m.name, *g, *f, &params).map_err(|e| Error::Config(e.to_string()))
            }
            _ => Err(Error::Config(format!(
                "model '{}': an inline model needs both geometry and field; a catalog model takes only a name",
                m.name
            ))),
        }
    }

    pub fn montgomery_grid(&self) -> Result<MontgomeryGrid> {
        MontgomeryGrid::new(self.montgomery.half_width, self.montgomery.points).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn discretization_for(&self, h: f64) -> TubeDiscretization {
        let d = &self.discretization;
        TubeDiscretization {
            x_center: 0.0,
            x_half_width: d.x_half_width,
            x_points: d.x_points,
            t_half_width: d.t_half_width,
            t_points: d.t_points,
            h,
            energy_top: d.energy_top,
        }
    }

    pub fn cluster_tol(&self) -> f64 {
        self.solver.cluster_tol.unwrap_or(10.0 * self.solver.tolerance)
    }

    /// `δ_*^{2/3} μ_c`, the floor of the essential spectrum proxy.
    pub fn essential_floor(model: &ModelCatalogEntry) -> Result<f64> {
        Ok(model.field.delta_star.powf(2.0 / 3.0) * reference_critical_point()?.mu_c)
    }

    /// Structural checks; every failure is a [`Error::Config`].
    pub fn validate(&self) -> Result<ModelCatalogEntry> {
        let bad = |m: String| Err(Error::Config(m));
        let r = &self.run;
        if r.h_list.is_empty() {
            return bad("run.h_list is empty".into());
        }
        if let Some(h) = r.h_list.iter().find(|h| !(**h > 0.0 && **h < 1.0)) {
            return bad(format!("run.h_list entry {h} is outside (0, 1)"));
        }
        if r.h_list.windows(2).any(|w| !(w[1] < w[0])) {
            return bad(format!("run.h_list {:?} must be strictly decreasing", r.h_list));
        }
        if r.bands == 0 || r.levels == 0 {
            return bad("run.bands and run.levels must be at least 1".into());
        }
        let (e1, e2) = r.energy_window;
        if !(e1 < e2) {
            return bad(format!("run.energy_window ({e1}, {e2}) is empty"));
        }
        let e = &self.effective;
        for (name, (a, b)) in [("nu_range", e.nu_range), ("x_window", e.x_window), ("curve_range", e.curve_range)] {
            if !(a < b) {
                return bad(format!("effective.{name} ({a}, {b}) is empty"));
            }
        }
        if !(e.nu_range.0 < 0.0 && e.nu_range.1 > 0.0) {
            return bad("effective.nu_range must contain 0".into());
        }
        if !(e.tolerance > 0.0 && e.moment_step > 0.0) {
            return bad("effective.tolerance and effective.moment_step must be positive".into());
        }
        if e.curve_samples < 9 || e.action_samples < 3 || e.symbol_grid.0 < 2 || e.symbol_grid.1 < 2 {
            return bad("effective: need curve_samples ≥ 9, action_samples ≥ 3 and a symbol grid of at least 2 × 2".into());
        }
        if let Some(m) = e.modes {
            if m < 4 || m % 2 == 1 {
                return bad(format!("effective.modes = {m} must be even and at least 4"));
            }
        }
        if !(self.solver.tolerance > 0.0) || self.solver.cluster_tol.is_some_and(|c| !(c > 0.0)) {
            return bad("solver tolerances must be positive".into());
        }
        if e2 > self.discretization.energy_top {
            return bad(format!(
                "run.energy_window top {e2} exceeds discretization.energy_top {}",
                self.discretization.energy_top
            ));
        }
        self.montgomery_grid()?;
        let model = self.resolve_model()?;
        let floor = Self::essential_floor(&model)?;
        if !(e2 < floor - ENERGY_MARGIN) {
            return bad(format!(
                "run.energy_window top {e2} must stay below δ_*^(2/3)·μ_c − {ENERGY_MARGIN} = {:.6}",
                floor - ENERGY_MARGIN
            ));
        }
        for &h in &r.h_list {
            self.discretization_for(h).fitted_to(&model.geometry).check(&model).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(model)
    }

    /// Hex SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.outputs.directory = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn run_directory(&self) -> PathBuf {
        self.outputs.directory.join(format!("run-{}", &self.content_hash()[..16]))
    }
}
