use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::compare::{compare_spectra, ComparisonReport};
use super::config::{ExperimentConfig, ENERGY_MARGIN};
use crate::effective::{
    action_profile, bohr_sommerfeld_spectrum, effective_principal, effective_subprincipal, harmonic_prediction,
    quantize_effective, ActionProfile, EffectiveSymbol, PhaseBox, QuantizationSpec, SymbolOptions,
};
use crate::geometry::{validate_assumptions, ModelCatalogEntry, SampleSpec};
use crate::magnetic2d::{assemble_2d, localization_diagnostics, solve_2d};
use crate::montgomery::{dispersive_curve, scan_critical_points, CriticalPointData, MontgomeryGrid};
use crate::spectrum::SpectrumResult;
use crate::{Error, Result};

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub run_directory: PathBuf,
    pub model: Option<ModelCatalogEntry>,
    /// Number of bands whose symbol dips below the top of the energy window.
    pub k_e: usize,
    pub artifacts: Vec<ArtifactRecord>,
    pub timings: Vec<StageTiming>,
    pub status: RunStatus,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn artifact(&self, path: &str) -> Option<&ArtifactRecord> {
        self.artifacts.iter().find(|a| a.path == path)
    }

    pub fn h_directory(h: f64) -> String {
        format!("h_{h}")
    }
}

/// Spectrum of a quantized effective operator, all bands merged.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizedArtifact {
    pub order: u8,
    pub hbar: f64,
    pub quantization: QuantizationSpec,
    /// Per band, eigenvalues up to the quantization energy top
    /// (`δ_*^{2/3} μ_c` less the margin).
    pub per_band: Vec<SpectrumResult>,
    pub merged: SpectrumResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BohrSommerfeldArtifact {
    pub hbar: f64,
    pub window: (f64, f64),
    pub per_band: Vec<SpectrumResult>,
    pub merged: SpectrumResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonArtifact {
    pub h: f64,
    pub direct_vs_order1: ComparisonReport,
    pub bohr_sommerfeld_vs_order0: ComparisonReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandAction {
    pub band: usize,
    /// Symbol minimum; the window starts above it.
    pub bottom: f64,
    pub profile: Option<ActionProfile>,
}

/// Stateful writer that hashes every artifact it persists.
struct RunWriter {
    dir: PathBuf,
    manifest: RunManifest,
}

impl RunWriter {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.manifest.artifacts.retain(|a| a.path != rel);
        self.manifest.artifacts.push(ArtifactRecord {
            path: rel.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn time(&mut self, stage: &str, start: Instant) {
        self.manifest.timings.push(StageTiming { stage: stage.into(), seconds: start.elapsed().as_secs_f64() });
    }

    fn finish(&mut self) -> Result<()> {
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, json(&self.manifest)?).map_err(|e| Error::io(&path, e))
    }

    fn fail(&mut self, stage: &str, err: Error) -> Error {
        let err = err.in_stage(stage);
        self.manifest.status = RunStatus::Failed;
        let (name, msg) = match &err {
            Error::Stage { stage, source } => (stage.clone(), source.to_string()),
            e => (stage.to_string(), e.to_string()),
        };
        self.manifest.failed_stage = Some(name);
        self.manifest.error = Some(msg);
        match self.finish() {
            Ok(()) => err,
            Err(io) => io,
        }
    }
}

pub(crate) fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| Error::Diagnostic(format!("serialization failed: {e}")))?;
    v.push(b'\n');
    Ok(v)
}

/// Global minimizer of `δ` on `window`: dense sampling, then golden section.
fn delta_minimizer(model: &ModelCatalogEntry, (lo, hi): (f64, f64)) -> f64 {
    let f = |x: f64| model.field.delta(x);
    let n = 2000;
    let step = (hi - lo) / n as f64;
    let best = (0..=n).min_by(|&a, &b| f(lo + a as f64 * step).total_cmp(&f(lo + b as f64 * step))).unwrap_or(0);
    let (mut a, mut b) = ((lo + (best as f64 - 1.0) * step).max(lo), (lo + (best as f64 + 1.0) * step).min(hi));
    const G: f64 = 0.618_033_988_749_894_9;
    while b - a > 1e-12 {
        let (c, d) = (b - G * (b - a), a + G * (b - a));
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

const MAX_AUTO_MODES: usize = 4096;

/// Plane waves for a window of period `L`: three per `πℏ/L` of momentum reach.
pub fn default_modes(spec_period: f64, hbar: f64) -> usize {
    ((3.0 * spec_period / (PI * hbar)).ceil() as usize).next_power_of_two().max(64)
}

fn band_minimum(k: usize, grid: &MontgomeryGrid) -> Result<CriticalPointData> {
    let scan = scan_critical_points(k, -4.0, 8.0, 121, grid)?;
    scan.minima
        .into_iter()
        .min_by(|a, b| a.mu_c.total_cmp(&b.mu_c))
        .ok_or_else(|| Error::Diagnostic(format!("band {k} has no minimum on ν ∈ [−4, 8]")))
}

struct Global {
    model: ModelCatalogEntry,
    symbols: Vec<EffectiveSymbol>,
    actions: Vec<BandAction>,
    /// Energy the quantized operators must resolve: the essential-spectrum
    /// proxy less the margin, never below the 2D energy top.
    quantization_top: f64,
}

struct HOutput {
    files: Vec<(String, Vec<u8>)>,
    timings: Vec<StageTiming>,
    error: Option<Error>,
}

fn merged(method: &str, h: f64, per_band: &[SpectrumResult]) -> SpectrumResult {
    let mut values: Vec<f64> = per_band.iter().flat_map(|s| s.eigenvalues.iter().copied()).collect();
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut s = SpectrumResult::new(method, h, Vec::new(), values, vec![0.0; n]);
    if per_band.len() == 1 {
        s.band = per_band[0].band;
        s.indices = per_band[0].indices.clone();
    }
    s
}

fn run_h(config: &ExperimentConfig, g: &Global, h: f64) -> HOutput {
    let mut out = HOutput { files: Vec::new(), timings: Vec::new(), error: None };
    let dir = RunManifest::h_directory(h);
    let stage = |name: &str, out: &mut HOutput, f: &mut dyn FnMut(&mut HOutput) -> Result<()>| -> bool {
        let start = Instant::now();
        let r = f(out);
        let full = format!("{dir}/{name}");
        out.timings.push(StageTiming { stage: full.clone(), seconds: start.elapsed().as_secs_f64() });
        if let Err(e) = r {
            out.error = Some(e.in_stage(&full));
            return false;
        }
        true
    };
    let hbar = h.cbrt();
    let (e1, e2) = config.run.energy_window;
    let energy_top = config.discretization.energy_top;
    let cluster_tol = config.cluster_tol();
    let file = |name: &str| format!("{dir}/{name}");

    let mut direct = None;
    let ok = stage("direct_2d", &mut out, &mut |out| {
        let disc = config.discretization_for(h).fitted_to(&g.model.geometry);
        disc.check(&g.model)?;
        let op = assemble_2d(&g.model, &disc, config.discretization.variant)?;
        let s = solve_2d(&op, config.run.levels, config.solver.tolerance)?;
        out.files.push((file("spectrum_2d.json"), json(&s)?));
        let loc = localization_diagnostics(&op, &s, energy_top)?;
        out.files.push((file("localization.json"), json(&loc)?));
        direct = Some(s);
        Ok(())
    });
    if !ok {
        return out;
    }
    let direct = direct.expect("set by stage");

    let e = &config.effective;
    let mut quant = Vec::new();
    let ok = stage("quantize", &mut out, &mut |out| {
        for order in [0u8, 1] {
            let mut spec = QuantizationSpec::new(e.x_window, hbar, 64, g.quantization_top);
            spec.modes = e.modes.unwrap_or_else(|| default_modes(spec.period(), hbar));
            let mut per_band = Vec::new();
            for symbol in &g.symbols {
                let q = loop {
                    match quantize_effective(symbol, order, &spec) {
                        // An automatic mode count doubles until the symbol is resolved.
                        Err(Error::Resolution(_)) if e.modes.is_none() && spec.modes < MAX_AUTO_MODES => spec.modes *= 2,
                        r => break r?,
                    }
                };
                let values = q.window(f64::NEG_INFINITY, g.quantization_top);
                let n = values.len();
                let mut s = SpectrumResult::new(&format!("quantized_order{order}"), h, vec![spec.modes], values, vec![0.0; n]);
                s.band = Some(symbol.band);
                s.indices = (0..n).collect();
                per_band.push(s);
            }
            let merged = merged(&format!("quantized_order{order}"), h, &per_band);
            let art = QuantizedArtifact { order, hbar, quantization: spec, per_band, merged };
            out.files.push((file(&format!("quantized_order{order}.json")), json(&art)?));
            quant.push(art);
        }
        Ok(())
    });
    if !ok {
        return out;
    }

    let mut bs = None;
    let ok = stage("bohr_sommerfeld", &mut out, &mut |out| {
        let mut per_band = Vec::new();
        for a in &g.actions {
            match &a.profile {
                Some(p) => per_band.push(bohr_sommerfeld_spectrum(p, hbar)?),
                None => {
                    let mut s = SpectrumResult::new("bohr_sommerfeld", h, Vec::new(), Vec::new(), Vec::new());
                    s.band = Some(a.band);
                    per_band.push(s);
                }
            }
        }
        // Above every band's action window start, so no band is cut short.
        let lo = g.actions.iter().filter_map(|a| a.profile.as_ref()).map(|p| p.energy_grid[0]).fold(f64::NEG_INFINITY, f64::max);
        let window = (lo.min(e2), e2);
        let merged = merged("bohr_sommerfeld", h, &per_band);
        let art = BohrSommerfeldArtifact { hbar, window, per_band, merged };
        out.files.push((file("bohr_sommerfeld.json"), json(&art)?));
        bs = Some(art);
        Ok(())
    });
    if !ok {
        return out;
    }
    let bs = bs.expect("set by stage");

    stage("comparison", &mut out, &mut |out| {
        let art = ComparisonArtifact {
            h,
            direct_vs_order1: compare_spectra(&direct, &quant[1].merged, (e1, e2), cluster_tol)?,
            bohr_sommerfeld_vs_order0: compare_spectra(&bs.merged, &quant[0].merged, bs.window, cluster_tol)?,
        };
        out.files.push((file("comparison.json"), json(&art)?));
        Ok(())
    });
    out
}

fn map_h<T: Send>(hs: &[f64], f: impl Fn(f64) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        hs.par_iter().map(|&h| f(h)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        hs.iter().map(|&h| f(h)).collect()
    }
}

/// Runs every stage and persists artifacts under the hash-named run
/// directory. On failure the manifest records the stage and the artifacts
/// written so far, and the stage error is returned.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<RunManifest> {
    let dir = config.run_directory();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut w = RunWriter {
        dir: dir.clone(),
        manifest: RunManifest {
            schema_version: MANIFEST_SCHEMA,
            config: config.clone(),
            config_hash: config.content_hash(),
            run_directory: dir,
            model: None,
            k_e: 0,
            artifacts: Vec::new(),
            timings: Vec::new(),
            status: RunStatus::Complete,
            failed_stage: None,
            error: None,
        },
    };
    match global_stages(config, &mut w) {
        Ok(g) => {
            let outputs = map_h(&config.run.h_list, |h| run_h(config, &g, h));
            let mut first_error = None;
            for o in outputs {
                for (rel, bytes) in &o.files {
                    if let Err(e) = w.write(rel, bytes) {
                        return Err(w.fail("write", e));
                    }
                }
                w.manifest.timings.extend(o.timings);
                if first_error.is_none() {
                    first_error = o.error;
                }
            }
            if let Some(e) = first_error {
                return Err(w.fail("per_h", e));
            }
            w.finish()?;
            Ok(w.manifest)
        }
        Err((stage, e)) => Err(w.fail(&stage, e)),
    }
}

fn global_stages(config: &ExperimentConfig, w: &mut RunWriter) -> std::result::Result<Global, (String, Error)> {
    macro_rules! stage {
        ($name:expr, $body:expr) => {{
            let start = Instant::now();
            let r: Result<_> = (|| $body)();
            w.time($name, start);
            r.map_err(|e| ($name.to_string(), e))?
        }};
    }
    let (e1, e2) = config.run.energy_window;
    let e = &config.effective;

    let model = stage!("validate", {
        let model = config.validate()?;
        let report = validate_assumptions(&model, &SampleSpec::default());
        w.write("config.toml", config.to_toml()?.as_bytes())?;
        w.write("validation.json", &json(&report)?)?;
        if !report.all_pass() {
            let failed: Vec<&str> =
                report.checks.iter().filter(|c| c.passed == Some(false)).map(|c| c.id.as_str()).collect();
            return Err(Error::Config(format!("model {} fails assumption checks: {}", model.name, failed.join(", "))));
        }
        Ok(model)
    });
    w.manifest.model = Some(model.clone());
    let grid = config.montgomery_grid().map_err(|e| ("validate".to_string(), e))?;
    let x_min = delta_minimizer(&model, e.x_window);
    let delta_min = model.field.delta(x_min);

    let critical = stage!("critical_points", {
        let mut points = Vec::new();
        for k in 1..=config.run.bands {
            let c = band_minimum(k, &grid)?;
            let below = delta_min.powf(2.0 / 3.0) * c.mu_c < e2;
            points.push(c);
            if !below {
                break;
            }
        }
        w.write("critical_points.json", &json(&points)?)?;
        Ok(points)
    });
    let k_e = critical.iter().filter(|c| delta_min.powf(2.0 / 3.0) * c.mu_c < e2).count();
    w.manifest.k_e = k_e;
    let bands = k_e.max(1);

    stage!("dispersive_curves", {
        let curves =
            (1..=bands).map(|k| dispersive_curve(k, e.curve_range.0, e.curve_range.1, e.curve_samples, &grid)).collect::<Result<Vec<_>>>()?;
        w.write("dispersive_curve.json", &json(&curves)?)?;
        Ok(())
    });

    let opts = SymbolOptions {
        nu_range: e.nu_range,
        tolerance: e.tolerance,
        moment_step: e.moment_step,
        montgomery: grid,
        ..SymbolOptions::default()
    };
    let symbols = stage!("effective_symbol", { (1..=bands).map(|k| EffectiveSymbol::new(&model, k, &opts)).collect::<Result<Vec<_>>>() });

    // Momentum box on which ξ/δ^{1/3} stays inside the tabulated range.
    let s = delta_min.cbrt();
    let phase_box = PhaseBox { x: e.x_window, xi: (e.nu_range.0 * s, e.nu_range.1 * s) };

    stage!("symbol_grid", {
        let lin = |(a, b): (f64, f64), n: usize| (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect::<Vec<_>>();
        let xs = lin(e.x_window, e.symbol_grid.0);
        let xis = lin((e.curve_range.0 * s, e.curve_range.1 * s), e.symbol_grid.1);
        let mut grids = Vec::new();
        for sym in &symbols {
            let mut g = effective_principal(sym, &xs, &xis)?;
            effective_subprincipal(sym, &mut g)?;
            grids.push(g);
        }
        w.write("symbol_grid.json", &json(&grids)?)?;
        Ok(())
    });

    stage!("harmonic_prediction", {
        let p = harmonic_prediction(&model, &critical[0], &config.run.h_list, config.run.levels, &grid)?;
        w.write("harmonic_prediction.json", &json(&p)?)?;
        w.write("lambda_table.csv", p.lambda_csv().as_bytes())?;
        Ok(())
    });

    let quantization_top = (ExperimentConfig::essential_floor(&model).map_err(|e| ("action_profile".to_string(), e))? - ENERGY_MARGIN)
        .max(config.discretization.energy_top);
    // Profiles run up to the quantization top so that levels just above the
    // window still have a counterpart.
    let actions = stage!("action_profile", {
        let mut actions = Vec::new();
        for (sym, c) in symbols.iter().zip(&critical) {
            let center = (x_min, c.nu_c * s);
            let bottom = sym.principal(center.0, center.1)?;
            let profile = if e2 > bottom {
                let lo = e1.max(bottom + 0.01 * (e2 - bottom));
                let principal = |x: f64, xi: f64| sym.principal(x, xi);
                let mut p = action_profile(&PrincipalOf(&principal), center, phase_box, (lo, quantization_top), e.action_samples)?;
                p.band = Some(sym.band);
                Some(p)
            } else {
                None
            };
            actions.push(BandAction { band: sym.band, bottom, profile });
        }
        w.write("action_profile.json", &json(&actions)?)?;
        Ok(actions)
    });

    Ok(Global { model, symbols, actions, quantization_top })
}

/// Adapts a fallible closure to a phase-space symbol.
struct PrincipalOf<'a, F>(&'a F);

impl<F: Fn(f64, f64) -> Result<f64> + Sync> crate::effective::PhaseSpaceSymbol for PrincipalOf<'_, F> {
    fn value(&self, x: f64, xi: f64) -> Result<f64> {
        (self.0)(x, xi)
    }
}
