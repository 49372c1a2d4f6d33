use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("write pulse {0} V does not map to any VTH level")]
    UnmappedPulse(f64),
    #[error("digit {digit} does not fit a {bits}-bit cell")]
    Encoding { digit: u32, bits: u8 },
    #[error("node solver: mismatch has no sign change on [0, {v_dl}] V")]
    Solver { v_dl: f64 },
    #[error("calibration failed (best residual {best_residual:.3e}): {reason}")]
    CalibrationFailed { best_residual: f64, reason: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("undefined ratio: denominator {0} is not positive")]
    UndefinedRatio(f64),
    #[error("degenerate ADC range: {0}")]
    DegenerateRange(String),
    #[error("mapping error: {0}")]
    Mapping(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
