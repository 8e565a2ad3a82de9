use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// The variants map onto the CLI exit codes: validation problems exit with 2,
/// numerical failures with 3, everything else with 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("numerical failure{}: {message}", fmt_time(.time))]
    Numerical { time: Option<f64>, message: String },

    #[error("I/O error at {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", .path.display())]
    Parse { path: PathBuf, message: String },
}

fn fmt_time(time: &Option<f64>) -> String {
    match time {
        Some(t) => format!(" at t = {t} s"),
        None => String::new(),
    }
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            time: None,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a simulation time to a numerical error.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            Error::Numerical { message, .. } => Error::Numerical {
                time: Some(t),
                message,
            },
            other => other,
        }
    }

    /// Prefix the field path of a validation error, e.g. `grid` + `n_nodes`.
    pub fn within(self, parent: &str) -> Self {
        match self {
            Error::Validation { field, message } => Error::Validation {
                field: format!("{parent}.{field}"),
                message,
            },
            other => other,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } | Error::Parse { .. } => 2,
            Error::Numerical { .. } => 3,
            Error::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
