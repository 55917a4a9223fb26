use std::path::PathBuf;

/// Errors produced by the solver, observers and experiment layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("CFL violation at t={t}: dt={dt} exceeds limit {limit} (max |u| = {max_speed})")]
    Cfl {
        t: f64,
        dt: f64,
        limit: f64,
        max_speed: f64,
    },

    #[error("non-finite state detected at t={t}")]
    NonFinite { t: f64 },

    #[error("observation grid incompatible: {0}")]
    IncompatibleObserver(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("time {t} is not a checkpoint of the trajectory")]
    MissingCheckpoint { t: f64 },

    #[error("observation gap {gap} exceeds kappa {kappa} at t={t}")]
    StreamGap { t: f64, gap: f64, kappa: f64 },

    #[error("time grids differ: {0}")]
    TimeGridMismatch(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("window [{t0}, {t1}] is not covered by the series span [{start}, {end}]")]
    WindowOutsideSpan { t0: f64, t1: f64, start: f64, end: f64 },

    #[error("wall-clock budget exhausted at t={t} ({elapsed_s:.1} s elapsed)")]
    DeadlineExceeded { t: f64, elapsed_s: f64 },

    #[error("bad snapshot format: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures that signal numerical blow-up rather than misuse.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Cfl { .. } | Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
