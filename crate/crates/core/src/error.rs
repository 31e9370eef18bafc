use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TwinError> = std::result::Result<T, E>;

/// Every failure the twin can report. The CLI maps each variant onto an
/// error category and exit code via [`TwinError::category`].
#[derive(Debug, Error)]
pub enum TwinError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("motor speed {omega} rad/s outside the command range [0, {omega_max}]")]
    CommandRange { omega: f64, omega_max: f64 },

    #[error("numeric fault: {0}")]
    NumericFault(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("config parse error in {path}: {message}")]
    ConfigParse { path: String, message: String },

    #[error("degenerate distribution: {attempts} consecutive non-positive draws")]
    DegenerateDistribution { attempts: usize },

    #[error("trial {trial} did not settle within the {horizon} s horizon")]
    Horizon { trial: usize, horizon: f64 },

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {what} = {index} (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("trace format error: {0}")]
    TraceFormat(String),
}

/// Coarse error classes surfaced by the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Simulation,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 3,
            ErrorCategory::Simulation => 4,
            ErrorCategory::Io => 5,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Simulation => "simulation",
            ErrorCategory::Io => "io",
        }
    }
}

impl TwinError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        TwinError::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TwinError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            TwinError::InvalidParameter { .. }
            | TwinError::Configuration(_)
            | TwinError::ConfigParse { .. }
            | TwinError::InvalidArgument(_)
            | TwinError::CommandRange { .. }
            | TwinError::Calibration(_) => ErrorCategory::Config,
            TwinError::NumericFault(_)
            | TwinError::DegenerateDistribution { .. }
            | TwinError::Horizon { .. }
            | TwinError::NotApplicable(_)
            | TwinError::Index { .. } => ErrorCategory::Simulation,
            TwinError::Io { .. } | TwinError::Csv(_) | TwinError::TraceFormat(_) => {
                ErrorCategory::Io
            }
        }
    }

    /// Prefixes the field path of an `InvalidParameter`, e.g. `zeta_fwd`
    /// becomes `fingers[0].zeta_fwd`.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            TwinError::InvalidParameter { field, reason } => TwinError::InvalidParameter {
                field: format!("{prefix}.{field}"),
                reason,
            },
            other => other,
        }
    }
}
