use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// Command line or config syntax.
    Parse,
    /// Well-formed input that violates the schema or a model precondition.
    Validation,
    /// A solver failed to converge or a target is infeasible.
    Solver,
    /// Output could not be written.
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Parse => 2,
            ErrorKind::Validation => 3,
            ErrorKind::Solver => 4,
            ErrorKind::Io => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn parse(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Parse,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    /// Single-line JSON record written to stderr on failure.
    pub fn record(&self) -> String {
        #[derive(Serialize)]
        struct Record<'a> {
            error: Inner<'a>,
        }
        #[derive(Serialize)]
        struct Inner<'a> {
            kind: ErrorKind,
            exit_code: i32,
            message: &'a str,
        }
        serde_json::to_string(&Record {
            error: Inner {
                kind: self.kind,
                exit_code: self.exit_code(),
                message: &self.message,
            },
        })
        .expect("error record serializes")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<pareto_filter::Error> for CliError {
    fn from(e: pareto_filter::Error) -> Self {
        use pareto_filter::Error as E;
        let kind = match e {
            E::Convergence { .. } | E::InfeasibleTarget { .. } => ErrorKind::Solver,
            E::Dimension { .. }
            | E::Instability { .. }
            | E::Validation { .. }
            | E::TooFewSamples { .. } => ErrorKind::Validation,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
