use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Validation => 2,
            ErrorCategory::Numerical => 3,
            ErrorCategory::Io => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected a square matrix, got {rows}x{cols}")]
    NotSquare { what: String, rows: usize, cols: usize },

    #[error("{context}: matrix `{matrix}` has shape {got_rows}x{got_cols}, expected {expected_rows}x{expected_cols}")]
    Dimension {
        context: String,
        matrix: String,
        expected_rows: usize,
        expected_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },

    #[error("{0}")]
    InvalidInput(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("{what}: matrix is not Hurwitz (max real eigenvalue {max_real:e})")]
    NotHurwitz { what: String, max_real: f64 },

    #[error("{what}: numerically singular system")]
    Singular { what: String },

    #[error("{what}: iteration did not converge after {iterations} steps")]
    NoConvergence { what: String, iterations: usize },

    #[error("stabilizing gain synthesis failed ({reason}); supply K1 explicitly in the scenario")]
    Synthesis { reason: String },

    #[error("transform not representable for S = {s}: identity residual {residual:e} exceeds 1e-8")]
    TransformNotRepresentable { s: String, residual: f64 },

    #[error("policy iteration: P is not monotonically non-increasing at iterate {iterate} (min eigenvalue of P[k]-P[k+1] = {min_eig:e})")]
    Monotonicity { iterate: usize, min_eig: f64 },

    #[error("simulation diverged at t = {t}: |state| exceeded 1e12")]
    BlowUp { t: f64 },

    #[error("agent `{agent}`, stage {stage}: {source}")]
    Agent {
        agent: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::NotSquare { .. }
            | Error::Dimension { .. }
            | Error::InvalidInput(_)
            | Error::Topology(_)
            | Error::Parse(_) => ErrorCategory::Validation,
            Error::NotHurwitz { .. }
            | Error::Singular { .. }
            | Error::NoConvergence { .. }
            | Error::Synthesis { .. }
            | Error::TransformNotRepresentable { .. }
            | Error::Monotonicity { .. }
            | Error::BlowUp { .. } => ErrorCategory::Numerical,
            Error::Agent { source, .. } => source.category(),
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub fn in_agent(self, agent: &str, stage: &'static str) -> Error {
        Error::Agent { agent: agent.to_string(), stage, source: Box::new(self) }
    }
}
