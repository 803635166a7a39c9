use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown model `{name}`; valid names are: {valid}")]
    NotFound { name: String, valid: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {field} at node {node} (x = {coords:?})")]
    Evaluation {
        field: &'static str,
        node: usize,
        coords: Vec<f64>,
    },

    #[error("non-monotone stencil at node {node}: |a12| = {a12} exceeds min(a11, a22) = {bound}")]
    NonMonotoneScheme { node: usize, a12: f64, bound: f64 },

    #[error("degenerate diffusion on axis {axis} at node {node} (a_ii = {value})")]
    Ellipticity { node: usize, axis: usize, value: f64 },

    #[error("{context}: no convergence after {iterations} iterations (last change {last_change:e})")]
    Convergence {
        context: String,
        iterations: usize,
        last_change: f64,
        last_iterate: Option<Box<Vec<f64>>>,
    },

    #[error("rate matrix is not irreducible: {0}")]
    NotIrreducible(String),

    #[error("{0}")]
    Range(String),

    #[error("path {path} diverged (|X| = {magnitude:e} at step {step})")]
    Divergence {
        path: usize,
        step: usize,
        magnitude: f64,
    },

    #[error("path {path} left the grid hull at x = {position:?}; enlarge the grid")]
    Extrapolation { path: usize, position: Vec<f64> },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("sweep row (r = {radius}, {bc}): {source}")]
    Sweep {
        radius: f64,
        bc: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of an iterative method to reach its tolerance,
    /// including those wrapped by a sweep row.
    pub fn is_convergence(&self) -> bool {
        match self {
            Error::Convergence { .. } => true,
            Error::Sweep { source, .. } => source.is_convergence(),
            _ => false,
        }
    }
}
