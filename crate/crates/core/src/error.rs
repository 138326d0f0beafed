//! Error type shared by every module.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("singular design{}: reciprocal condition {rcond:.3e} below 1e-12", series_suffix(.series))]
    SingularDesign { series: Option<String>, rcond: f64 },

    #[error("donor {donor}: shock-effect variance is zero, inverse-variance weights undefined")]
    DegenerateVariance { donor: String },

    #[error("donor {donor}: residuals have no spread, nothing to resample")]
    DegenerateResiduals { donor: String },

    #[error("covariate {column} has zero spread across donors and target, cannot standardize")]
    Standardization { column: usize },

    #[error("bootstrap replicate {replicate} failed after {attempts} redraws: {last}")]
    BootstrapFailed {
        replicate: usize,
        attempts: usize,
        last: String,
    },

    #[error("monte carlo repetition {rep} failed after {attempts} regenerations: {last}")]
    SimulationFailed {
        rep: usize,
        attempts: usize,
        last: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn series_suffix(series: &Option<String>) -> String {
    match series {
        Some(id) => format!(" for series {id}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures of the numerical pipeline, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. }
                | Error::DegenerateVariance { .. }
                | Error::DegenerateResiduals { .. }
                | Error::Standardization { .. }
                | Error::BootstrapFailed { .. }
                | Error::SimulationFailed { .. }
        )
    }

    /// Process exit code used by the CLI: 2 for input errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }

    /// Wraps an I/O failure with the path it concerns.
    pub fn at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::File {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn with_series(self, id: &str) -> Self {
        match self {
            Error::SingularDesign {
                series: None,
                rcond,
            } => Error::SingularDesign {
                series: Some(id.to_string()),
                rcond,
            },
            other => other,
        }
    }
}
