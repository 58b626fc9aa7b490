use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid truncation dimension {0} (need at least 2)")]
    InvalidDim(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cutoff too small: weight {weight:.3e} beyond dim {dim}, need dim >= {required}")]
    CutoffInadequate {
        dim: usize,
        required: usize,
        weight: f64,
    },

    #[error("integrator failed to reach tolerance {tol:.1e} (achieved {achieved:.3e})")]
    Integrator { tol: f64, achieved: f64 },

    #[error("series did not converge: relative change {change:.3e} exceeds {tol:.1e}")]
    SeriesNonConvergence { change: f64, tol: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("quadrature grid too small: {mass:.3e} probability mass outside the grid")]
    GridTooSmall { mass: f64 },

    #[error("channel violates CPTP by {defect:.3e}")]
    NotCptp { defect: f64 },

    #[error("rank truncation error {0:.3e} exceeds tolerance")]
    RankTruncation(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing grid points: {0}")]
    MissingPoints(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
