use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing upstream artifact {artifact} (run `{producer}` first)")]
    MissingArtifact { artifact: String, producer: String },
    #[error("artifact {artifact} has config hash {found}, expected {expected}")]
    HashMismatch {
        artifact: String,
        found: String,
        expected: String,
    },
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Core(#[from] hpfactor::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } => 3,
            CliError::HashMismatch { .. } => 4,
            CliError::Validation(_) => 5,
            _ => 1,
        }
    }

    /// Machine-readable form printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let kind = match self {
            CliError::Config(_) => "config",
            CliError::MissingArtifact { .. } => "missing_artifact",
            CliError::HashMismatch { .. } => "config_hash_mismatch",
            CliError::Validation(_) => "validation_failed",
            CliError::Core(_) => "computation",
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
        };
        let mut v = json!({ "error": kind, "message": self.to_string() });
        match self {
            CliError::MissingArtifact { artifact, producer } => {
                v["artifact"] = json!(artifact);
                v["producer"] = json!(producer);
            }
            CliError::HashMismatch {
                artifact,
                found,
                expected,
            } => {
                v["artifact"] = json!(artifact);
                v["found"] = json!(found);
                v["expected"] = json!(expected);
            }
            CliError::Validation(f) => v["failures"] = json!(f),
            _ => {}
        }
        v
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
