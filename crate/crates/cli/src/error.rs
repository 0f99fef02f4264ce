use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

/// Failure categories reported on stderr and through the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Validation,
    Infeasible,
    NotConverged,
    Io,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Validation => 2,
            Category::Infeasible => 3,
            Category::NotConverged => 4,
            Category::Io => 5,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, row {row}: {message}")]
    Row {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] arrival_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> Category {
        use arrival_core::Error as E;
        match self {
            CliError::Io { .. } => Category::Io,
            CliError::Row { .. } | CliError::Config(_) => Category::Validation,
            CliError::Core(e) => match e {
                E::Infeasible { .. } => Category::Infeasible,
                E::NotConverged(_) | E::SingularInformation { .. } => Category::NotConverged,
                _ => Category::Validation,
            },
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            category: Category,
            message: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            row: Option<u64>,
            #[serde(skip_serializing_if = "Option::is_none")]
            path: Option<&'a std::path::Path>,
        }
        let (row, path) = match self {
            CliError::Row { row, path, .. } => (Some(*row), Some(path.as_path())),
            CliError::Io { path, .. } => (None, Some(path.as_path())),
            _ => (None, None),
        };
        let body = Body {
            category: self.category(),
            message: self.to_string(),
            row,
            path,
        };
        serde_json::json!({ "error": body }).to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
