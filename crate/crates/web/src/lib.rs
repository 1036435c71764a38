//! Browser bindings: each call returns a JSON string for the page to plot.

use std::cell::RefCell;

use maglab::effective::{effective_principal, quantize_effective, EffectiveSymbol, QuantizationSpec, SymbolOptions};
use maglab::geometry::model_by_name;
use maglab::lab::{default_modes, ExperimentConfig, ENERGY_MARGIN};
use maglab::montgomery::{dispersive_curve, MontgomeryGrid};
use maglab::Error;
use serde_json::json;
use wasm_bindgen::prelude::*;

const X_WINDOW: (f64, f64) = (-4.0, 4.0);
const MAX_MODES: usize = 2048;

thread_local! {
    static SYMBOL: RefCell<Option<EffectiveSymbol>> = const { RefCell::new(None) };
}

fn js(e: impl ToString) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn fiber_grid() -> MontgomeryGrid {
    MontgomeryGrid::new(10.0, 1001).expect("fixed grid is valid")
}

/// Ground-band effective symbol of `model`, tabulated once per model.
fn with_symbol<T>(model: &str, f: impl FnOnce(&EffectiveSymbol) -> Result<T, Error>) -> Result<T, Error> {
    SYMBOL.with(|cell| {
        let mut slot = cell.borrow_mut();
        if slot.as_ref().map_or(true, |s| s.model.name != model) {
            let entry = model_by_name(model)?;
            let opts = SymbolOptions { nu_range: (-12.0, 12.0), montgomery: fiber_grid(), ..SymbolOptions::default() };
            *slot = Some(EffectiveSymbol::principal_only(&entry, 1, &opts)?);
        }
        f(slot.as_ref().unwrap())
    })
}

/// Fiber eigenvalue `μ_k(ν)` (bands from 1) sampled on `[nu_lo, nu_hi]`.
#[wasm_bindgen]
pub fn band_curve(band: usize, nu_lo: f64, nu_hi: f64, samples: usize) -> Result<String, JsValue> {
    band_curve_json(band, nu_lo, nu_hi, samples).map_err(js)
}

pub fn band_curve_json(band: usize, nu_lo: f64, nu_hi: f64, samples: usize) -> Result<String, Error> {
    let table = dispersive_curve(band, nu_lo, nu_hi, samples, &fiber_grid())?;
    Ok(serde_json::to_string(&table).unwrap())
}

/// Principal effective symbol on an `nx × nxi` grid over `|x| ≤ 3`, `ξ ∈ [−1.5, 2.5]`.
#[wasm_bindgen]
pub fn symbol_grid(model: &str, nx: usize, nxi: usize) -> Result<String, JsValue> {
    symbol_grid_json(model, nx, nxi).map_err(js)
}

pub fn symbol_grid_json(model: &str, nx: usize, nxi: usize) -> Result<String, Error> {
    let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> { (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect() };
    if nx < 2 || nxi < 2 {
        return Err(Error::Precondition("grid needs at least 2 points per axis".into()));
    }
    let grid = with_symbol(model, |s| effective_principal(s, &lin(-3.0, 3.0, nx), &lin(-1.5, 2.5, nxi)))?;
    Ok(serde_json::to_string(&grid).unwrap())
}

/// Eigenvalues of the quantized principal symbol below the essential floor.
#[wasm_bindgen]
pub fn well_spectrum(model: &str, hbar: f64, levels: usize) -> Result<String, JsValue> {
    well_spectrum_json(model, hbar, levels).map_err(js)
}

pub fn well_spectrum_json(model: &str, hbar: f64, levels: usize) -> Result<String, Error> {
    if !(hbar > 0.0 && hbar <= 0.2) {
        return Err(Error::Precondition("ℏ must lie in (0, 0.2]".into()));
    }
    let entry = model_by_name(model)?;
    let top = ExperimentConfig::essential_floor(&entry)? - ENERGY_MARGIN;
    let mut spec = QuantizationSpec::new(X_WINDOW, hbar, 64, top);
    spec.modes = default_modes(spec.period(), hbar);
    let q = with_symbol(model, |s| loop {
        match quantize_effective(s, 0, &spec) {
            Err(Error::Resolution(_)) if spec.modes < MAX_MODES => spec.modes *= 2,
            r => break r,
        }
    })?;
    let eigenvalues: Vec<f64> = q.eigenvalues.iter().copied().filter(|&v| v < top).take(levels).collect();
    Ok(json!({ "hbar": hbar, "modes": spec.modes, "top": top, "eigenvalues": eigenvalues }).to_string())
}
