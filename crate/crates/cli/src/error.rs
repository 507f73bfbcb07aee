use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

/// One invariant violation, addressed by its dotted TOML path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid experiment spec: {}", summarize(.0))]
    Invalid(Vec<FieldError>),

    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] txbf::Error),

    #[error("{excluded} of {cells} (channel, SNR, criterion) cells excluded, budget allows {allowed}")]
    ExclusionBudget {
        excluded: usize,
        cells: usize,
        allowed: usize,
        first: Vec<txbf::simulator::ExcludedChannel>,
    },
}

fn summarize(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("{}: {}", e.field, e.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Read { .. } => "read",
            CliError::Parse { .. } => "parse",
            CliError::Invalid(_) => "invalid_spec",
            CliError::Write { .. } => "write",
            CliError::Core(_) => "solver",
            CliError::ExclusionBudget { .. } => "exclusion_budget",
        }
    }

    /// Process exit status: 2 for problems with the input, 1 for failures
    /// while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid(_) => 2,
            _ => 1,
        }
    }

    /// Machine-readable description printed on stderr.
    pub fn report(&self) -> Value {
        let mut v = json!({
            "status": "error",
            "kind": self.kind(),
            "message": self.to_string(),
        });
        match self {
            CliError::Parse { origin, line, column, message } => {
                v["location"] = json!({ "file": origin, "line": line, "column": column });
                v["detail"] = json!(message);
            }
            CliError::Invalid(fields) => v["fields"] = json!(fields),
            CliError::ExclusionBudget { excluded, cells, allowed, first } => {
                v["excluded"] = json!(excluded);
                v["cells"] = json!(cells);
                v["allowed"] = json!(allowed);
                v["examples"] = json!(first);
            }
            _ => {}
        }
        v
    }
}
