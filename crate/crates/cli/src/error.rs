use std::fmt;

use isolevel::Error;

/// A failure that ends the process: a stable code, the exit status and a
/// one-line message.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub exit: i32,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

impl CliError {
    pub fn new(code: &'static str, exit: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            exit,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("E_USAGE", EXIT_USAGE, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("E_CONFIG", EXIT_USAGE, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new("E_INPUT", EXIT_INPUT, message)
    }

    pub fn checksum(message: impl Into<String>) -> Self {
        Self::new("E_CHECKSUM", EXIT_INPUT, message)
    }

    pub fn solver(message: impl Into<String>) -> Self {
        Self::new("E_SOLVER", EXIT_SOLVER, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new("E_INTERNAL", EXIT_INTERNAL, message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::new("E_IO", EXIT_INPUT, format!("{}: {e}", path.display()))
    }

    /// `error[CODE]: message` with any line breaks folded.
    pub fn line(&self) -> String {
        let msg: Vec<&str> = self.message.split_whitespace().collect();
        format!("error[{}]: {}", self.code, msg.join(" "))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, exit) = match e {
            Error::Io { .. } => ("E_IO", EXIT_INPUT),
            Error::Parse { .. }
            | Error::BadFace { .. }
            | Error::NonManifoldEdge { .. }
            | Error::InconsistentOrientation { .. }
            | Error::DegenerateTriangle { .. }
            | Error::OpenBoundary { .. } => ("E_MESH", EXIT_INPUT),
            Error::FieldSize { .. } | Error::MeshMismatch(_) => ("E_MISMATCH", EXIT_INPUT),
            Error::Config(_) => ("E_CONFIG", EXIT_USAGE),
            Error::Boundary(_) | Error::Unreachable { .. } => ("E_BOUNDARY", EXIT_INPUT),
            Error::Json(_) => ("E_INPUT", EXIT_INPUT),
            Error::DegenerateGradient { .. }
            | Error::DegenerateVertexGradient { .. }
            | Error::Gouging { .. }
            | Error::ConstantField
            | Error::LinearSolve(_)
            | Error::DegenerateIncrement { .. } => ("E_SOLVER", EXIT_SOLVER),
        };
        Self::new(code, exit, message)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input(format!("json: {e}"))
    }
}
