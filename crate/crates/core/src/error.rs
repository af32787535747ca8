use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("face {face}: {message}")]
    BadFace { face: usize, message: String },

    #[error("non-manifold edge ({a}, {b}) shared by {count} faces")]
    NonManifoldEdge { a: usize, b: usize, count: usize },

    #[error("edge ({a}, {b}) is traversed in the same direction by two faces (inconsistent orientation)")]
    InconsistentOrientation { a: usize, b: usize },

    #[error("degenerate triangle: face {face} has area {area:e}")]
    DegenerateTriangle { face: usize, area: f64 },

    #[error("open boundary chain at non-manifold vertex {vertex}")]
    OpenBoundary { vertex: usize },

    #[error("field has {got} values but mesh has {expected} vertices")]
    FieldSize { expected: usize, got: usize },

    #[error("gradient below floor on {} face(s), first is face {}", faces.len(), faces.first().copied().unwrap_or(usize::MAX))]
    DegenerateGradient { faces: Vec<usize> },

    #[error("gradient below floor on a face incident to vertex {vertex}")]
    DegenerateVertexGradient { vertex: usize },

    #[error("{}kappa_s + kappa_c = {value:e} <= 0 (gouging regime)", face.map(|f| format!("face {f}: ")).unwrap_or_default())]
    Gouging { face: Option<usize>, value: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid boundary condition: {0}")]
    Boundary(String),

    #[error("mesh component {component} (contains vertex {vertex}) is unreachable from the seed curve")]
    Unreachable { component: usize, vertex: usize },

    #[error("baseline Dirichlet data fixes every constrained vertex to the same value")]
    ConstantField,

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("level increment {increment:e} at level {level} is below the degeneracy threshold")]
    DegenerateIncrement { level: f64, increment: f64 },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
