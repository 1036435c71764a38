use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::pipeline::{json, BohrSommerfeldArtifact, ComparisonArtifact, QuantizedArtifact, RunManifest, RunStatus};
use super::svg::{contour_plot, line_plot, Series};
use crate::effective::{EffectiveSymbolGrid, HarmonicPrediction};
use crate::magnetic2d::LocalizationReport;
use crate::montgomery::DispersiveCurveTable;
use crate::spectrum::SpectrumResult;
use crate::{Error, Result};

pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub h: f64,
    pub hbar: f64,
    pub n: usize,
    pub direct: f64,
    pub prediction_c1_closed_form: Option<f64>,
    pub error_c1_closed_form: Option<f64>,
    pub prediction_c1_hessian: Option<f64>,
    pub error_c1_hessian: Option<f64>,
    pub quantized_order1: Option<f64>,
    pub error_quantized_order1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundCoefficient {
    pub h: f64,
    pub hbar: f64,
    /// `(λ₁/h^{4/3} − δ_c^{2/3} μ_c)/ℏ`.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub h: f64,
    #[serde(with = "super::compare::extended_real")]
    pub direct_vs_order1_hausdorff_like: f64,
    pub direct_vs_order1_rank_check: bool,
    #[serde(with = "super::compare::extended_real")]
    pub bohr_sommerfeld_vs_order0_hausdorff_like: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub h: f64,
    pub ground_decay_rate: Option<f64>,
    pub ground_mass_outside: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub config_hash: String,
    pub model: Option<String>,
    pub k_e: usize,
    pub c1_closed_form: Option<f64>,
    pub c1_hessian: Option<f64>,
    /// Predicted ground `ℏ`-coefficients for the two constants.
    pub predicted_coefficient_closed_form: Option<f64>,
    pub predicted_coefficient_hessian: Option<f64>,
    pub ground_coefficients: Vec<GroundCoefficient>,
    /// Candidate closer to the coefficient at the smallest `h`.
    pub better_c1: Option<String>,
    /// Least-squares slopes of `log|error of λ₁|` against `log h`.
    pub convergence_slope_c1_closed_form: Option<f64>,
    pub convergence_slope_c1_hessian: Option<f64>,
    /// `(λ_{n+1} − λ_n)/ℏ` in rescaled units, which is the physical gap over `h^{5/3}`.
    pub level_spacings: Vec<(f64, Vec<f64>)>,
    pub comparisons: Vec<ComparisonSummary>,
    pub localization: Vec<LocalizationSummary>,
    pub errors: Vec<ErrorRow>,
}

fn read<T: DeserializeOwned>(dir: &Path, rel: &str) -> Result<Option<T>> {
    let path = dir.join(rel);
    match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Config(format!("{}: malformed artifact: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(path, e)),
    }
}

struct PerH {
    h: f64,
    direct: Option<SpectrumResult>,
    quantized: [Option<QuantizedArtifact>; 2],
    bs: Option<BohrSommerfeldArtifact>,
    comparison: Option<ComparisonArtifact>,
    localization: Option<Vec<LocalizationReport>>,
}

fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        points.iter().filter(|p| p.1 > 0.0 && p.1.is_finite()).map(|&(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn summarize(m: &RunManifest, prediction: Option<&HarmonicPrediction>, per_h: &[PerH]) -> ReportSummary {
    let mut s = ReportSummary {
        config_hash: m.config_hash.clone(),
        model: m.model.as_ref().map(|m| m.name.clone()),
        k_e: m.k_e,
        c1_closed_form: prediction.map(|p| p.c1_closed_form),
        c1_hessian: prediction.map(|p| p.c1_hessian),
        predicted_coefficient_closed_form: prediction.map(|p| p.expansion(0, p.c1_closed_form).1),
        predicted_coefficient_hessian: prediction.map(|p| p.expansion(0, p.c1_hessian).1),
        ground_coefficients: Vec::new(),
        better_c1: None,
        convergence_slope_c1_closed_form: None,
        convergence_slope_c1_hessian: None,
        level_spacings: Vec::new(),
        comparisons: Vec::new(),
        localization: Vec::new(),
        errors: Vec::new(),
    };
    for ph in per_h {
        let hbar = ph.h.cbrt();
        if let Some(d) = &ph.direct {
            let gaps = d.eigenvalues.windows(2).map(|w| (w[1] - w[0]) / hbar).collect();
            s.level_spacings.push((ph.h, gaps));
            if let (Some(p), Some(&l1)) = (prediction, d.eigenvalues.first()) {
                s.ground_coefficients.push(GroundCoefficient { h: ph.h, hbar, coefficient: (l1 - p.expansion(0, 0.0).0) / hbar });
            }
            let q1 = ph.quantized[1].as_ref().map(|q| &q.merged.eigenvalues);
            for (n, &v) in d.eigenvalues.iter().enumerate() {
                let row = prediction.and_then(|p| p.lambda_table.iter().find(|r| r.h == ph.h));
                let pp = row.and_then(|r| r.with_c1_closed_form.get(n).copied());
                let ph_ = row.and_then(|r| r.with_c1_hessian.get(n).copied());
                let q = q1.and_then(|q| q.get(n).copied());
                s.errors.push(ErrorRow {
                    h: ph.h,
                    hbar,
                    n,
                    direct: v,
                    prediction_c1_closed_form: pp,
                    error_c1_closed_form: pp.map(|p| v - p),
                    prediction_c1_hessian: ph_,
                    error_c1_hessian: ph_.map(|p| v - p),
                    quantized_order1: q,
                    error_quantized_order1: q.map(|q| v - q),
                });
            }
        }
        if let Some(c) = &ph.comparison {
            s.comparisons.push(ComparisonSummary {
                h: ph.h,
                direct_vs_order1_hausdorff_like: c.direct_vs_order1.hausdorff_like,
                direct_vs_order1_rank_check: c.direct_vs_order1.rank_check,
                bohr_sommerfeld_vs_order0_hausdorff_like: c.bohr_sommerfeld_vs_order0.hausdorff_like,
            });
        }
        if let Some(l) = &ph.localization {
            let g = l.iter().find(|r| r.index == 1);
            s.localization.push(LocalizationSummary {
                h: ph.h,
                ground_decay_rate: g.map(|r| r.transverse_decay_rate),
                ground_mass_outside: g.map(|r| r.tangential_mass_outside),
            });
        }
    }
    let ground: Vec<&ErrorRow> = s.errors.iter().filter(|r| r.n == 0).collect();
    let fit = |f: fn(&ErrorRow) -> Option<f64>| slope(&ground.iter().filter_map(|r| f(r).map(|e| (r.h, e.abs()))).collect::<Vec<_>>());
    s.convergence_slope_c1_closed_form = fit(|r| r.error_c1_closed_form);
    s.convergence_slope_c1_hessian = fit(|r| r.error_c1_hessian);
    if let (Some(last), Some(a), Some(b)) =
        (s.ground_coefficients.iter().min_by(|a, b| a.h.total_cmp(&b.h)), s.predicted_coefficient_closed_form, s.predicted_coefficient_hessian)
    {
        let better = if (last.coefficient - a).abs() <= (last.coefficient - b).abs() { "closed_form" } else { "hessian" };
        s.better_c1 = Some(better.into());
    }
    s
}

fn eigenvalue_csv(per_h: &[PerH]) -> String {
    // `n` is the quantum number when the method assigns one, else the position from 0.
    let mut out = String::from("h,method,band,n,eigenvalue\n");
    let mut rows = |s: &SpectrumResult, h: f64| {
        for (i, v) in s.eigenvalues.iter().enumerate() {
            let idx = s.indices.get(i).copied().unwrap_or(i);
            let band = s.band.map_or(String::new(), |b| b.to_string());
            let _ = writeln!(out, "{h},{},{band},{idx},{v}", s.method);
        }
    };
    for ph in per_h {
        if let Some(d) = &ph.direct {
            rows(d, ph.h);
        }
        for q in ph.quantized.iter().flatten() {
            for b in &q.per_band {
                rows(b, ph.h);
            }
        }
        if let Some(bs) = &ph.bs {
            for b in &bs.per_band {
                rows(b, ph.h);
            }
        }
    }
    out
}

fn errors_csv(rows: &[ErrorRow]) -> String {
    let mut out = String::from(
        "h,hbar,n,direct,prediction_c1_closed_form,error_c1_closed_form,prediction_c1_hessian,error_c1_hessian,quantized_order1,error_quantized_order1\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.h,
            r.hbar,
            r.n,
            r.direct,
            opt(r.prediction_c1_closed_form),
            opt(r.error_c1_closed_form),
            opt(r.prediction_c1_hessian),
            opt(r.error_c1_hessian),
            opt(r.quantized_order1),
            opt(r.error_quantized_order1)
        );
    }
    out
}

fn convergence_svg(prediction: Option<&HarmonicPrediction>, per_h: &[PerH], levels: usize) -> String {
    let mut series = Vec::new();
    for n in 0..levels {
        let points: Vec<(f64, f64)> = per_h
            .iter()
            .filter_map(|ph| ph.direct.as_ref().and_then(|d| d.eigenvalues.get(n)).map(|&v| (ph.h.cbrt(), v)))
            .collect();
        if !points.is_empty() {
            series.push(Series { label: format!("direct n={n}"), points, markers: true });
        }
    }
    if let Some(p) = prediction {
        for (label, c1) in [("c1 closed form", p.c1_closed_form), ("c1 Hessian", p.c1_hessian)] {
            let hbars: Vec<f64> = p.lambda_table.iter().map(|r| r.hbar).collect();
            let (c0, c) = p.expansion(0, c1);
            series.push(Series {
                label: format!("n=0, {label}"),
                points: hbars.iter().map(|&b| (b, c0 + b * c)).collect(),
                markers: false,
            });
        }
    }
    line_plot("λ_n(h)/h^(4/3) against h^(1/3)", "h^(1/3)", "λ/h^(4/3)", &series)
}

/// Writes the tables, the summary and, when asked, the plots under
/// `<run>/report/`. Reads everything back from the persisted artifacts.
pub fn emit_report(manifest: &RunManifest, emit_plots: bool) -> Result<Vec<PathBuf>> {
    if manifest.status != RunStatus::Complete {
        return Err(Error::Precondition(format!(
            "run {} did not complete (failed stage {:?})",
            manifest.run_directory.display(),
            manifest.failed_stage
        )));
    }
    let dir = &manifest.run_directory;
    let out_dir = dir.join(REPORT_DIR);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let prediction: Option<HarmonicPrediction> = read(dir, "harmonic_prediction.json")?;
    let mut per_h = Vec::new();
    for &h in &manifest.config.run.h_list {
        let sub = RunManifest::h_directory(h);
        let f = |name: &str| format!("{sub}/{name}");
        per_h.push(PerH {
            h,
            direct: read(dir, &f("spectrum_2d.json"))?,
            quantized: [read(dir, &f("quantized_order0.json"))?, read(dir, &f("quantized_order1.json"))?],
            bs: read(dir, &f("bohr_sommerfeld.json"))?,
            comparison: read(dir, &f("comparison.json"))?,
            localization: read(dir, &f("localization.json"))?,
        });
    }
    let summary = summarize(manifest, prediction.as_ref(), &per_h);

    let mut written = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    put("eigenvalues.csv", eigenvalue_csv(&per_h).as_bytes())?;
    let predictions = prediction.as_ref().map_or_else(
        || String::from("h,hbar,n,lambda_rescaled_c1_closed_form,lambda_rescaled_c1_hessian\n"),
        |p| p.lambda_csv(),
    );
    put("predictions.csv", predictions.as_bytes())?;
    put("errors.csv", errors_csv(&summary.errors).as_bytes())?;
    put("summary.json", &json(&summary)?)?;

    if emit_plots {
        let curves: Vec<DispersiveCurveTable> = read(dir, "dispersive_curve.json")?.unwrap_or_default();
        let series: Vec<Series> = curves
            .iter()
            .map(|c| Series {
                label: format!("band {}", c.band),
                points: c.nu_grid.iter().copied().zip(c.values.iter().copied()).collect(),
                markers: false,
            })
            .collect();
        put("dispersive_curves.svg", line_plot("Dispersive curves", "ν", "μ(ν)", &series).as_bytes())?;

        let grids: Vec<EffectiveSymbolGrid> = read(dir, "symbol_grid.json")?.unwrap_or_default();
        if let Some(g) = grids.first() {
            let lo = g.principal.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let top = manifest.config.run.energy_window.1.max(lo);
            let levels: Vec<f64> = (1..=5).map(|i| lo + (top - lo) * i as f64 / 5.0).collect();
            let svg = contour_plot("Principal symbol, band 1", "x", "ξ", &g.x_grid, &g.xi_grid, &g.principal, &levels);
            put("symbol_contour.svg", svg.as_bytes())?;
        }
        put("convergence.svg", convergence_svg(prediction.as_ref(), &per_h, manifest.config.run.levels).as_bytes())?;
    }
    Ok(written)
}
