use std::fmt;

use thiserror::Error;

/// A single invariant violation found by model validation.
///
/// `code` is a stable machine-readable identifier (e.g. `PATH_REPEAT`,
/// `INTRA_SLICE_CYCLE`); `location` points at the offending declaration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub code: &'static str,
    pub location: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {line}:{col}: {message}")]
    Parse { line: u32, col: u32, message: String },

    #[error("validation failed:\n{}", format_issues(issues))]
    Validation { issues: Vec<ValidationIssue> },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("closure violation: state {state} escapes the solved set via action {action} to {successor}")]
    Closure {
        state: String,
        action: String,
        successor: String,
    },

    #[error("{0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    let lines: Vec<String> = issues.iter().map(|i| format!("  {i}")).collect();
    lines.join("\n")
}

impl Error {
    pub fn validation(issues: Vec<ValidationIssue>) -> Self {
        Error::Validation { issues }
    }

    pub fn single_issue(code: &'static str, location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            issues: vec![ValidationIssue {
                code,
                location: location.into(),
                message: message.into(),
            }],
        }
    }

    /// Process exit code for the CLI contract: 1 usage or verification
    /// failure, 2 parse, 3 validation, 4 capacity, 5 closure violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Parse { .. } => 2,
            Error::Validation { .. } => 3,
            Error::Capacity(_) => 4,
            Error::Closure { .. } => 5,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
