//! Experiment orchestration: configs, pipeline runs, spectral comparison
//! and report emission.

mod compare;
mod config;
mod pipeline;
mod report;
pub mod svg;

pub use compare::{compare_spectra, Cluster, ComparisonReport, TaggedSpectrum};
pub use config::{
    DiscretizationSection, EffectiveSection, ExperimentConfig, ModelSection, MontgomerySection, OutputSection, RunSection,
    SolverSection, ENERGY_MARGIN,
};
pub use pipeline::{
    default_modes, run_pipeline, ArtifactRecord, BandAction, BohrSommerfeldArtifact, ComparisonArtifact, QuantizedArtifact,
    RunManifest, RunStatus, StageTiming, MANIFEST_FILE,
};
pub use report::{emit_report, ErrorRow, ReportSummary, REPORT_DIR};
