use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} did not converge; best residuals {residuals:?}")]
    NoConvergence { what: String, residuals: Vec<f64> },

    #[error("eigensolver stagnated after {iterations} iterations; residuals {residuals:?}")]
    Stagnation { iterations: usize, residuals: Vec<f64> },

    #[error("operator is not bounded below by {bound}: Rayleigh quotient {rayleigh}")]
    Indefinite { rayleigh: f64, bound: f64 },

    #[error("out of range: {0}")]
    Range(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("bracketing failed: {0}")]
    Bracketing(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("coverage: {0}")]
    Coverage(String),

    #[error("regularity: {0}")]
    Regularity(String),

    #[error("quadrature did not converge at x = {x}, t = {t}")]
    Quadrature { x: f64, t: f64 },

    #[error("diagnostic failed: {0}")]
    Diagnostic(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage: stage.to_string(), source: Box::new(e) },
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } => 4,
            Error::Stage { source, .. } => match source.as_ref() {
                Error::Io { .. } => 4,
                Error::Config(_) => 2,
                _ => 3,
            },
            _ => 3,
        }
    }
}
