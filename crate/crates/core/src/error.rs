use thiserror::Error;

/// Errors raised across the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integration diverged at t = {t}: state {label} (index {index}) is {value}")]
    Divergence {
        t: f64,
        index: usize,
        label: String,
        value: f64,
    },
    #[error("trim did not converge within {periods} periods, residual {residual:e}")]
    TrimFailure { periods: usize, residual: f64 },
    #[error("Fourier fit residual {residual:e} exceeds {tolerance:e}; increase n_psi (now {n_psi})")]
    Aliasing {
        residual: f64,
        tolerance: f64,
        n_psi: usize,
    },
    #[error("{samples} samples cannot resolve harmonic order {order}; need at least {needed}")]
    TooFewSamples {
        samples: usize,
        order: usize,
        needed: usize,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("fast subsystem is ill-conditioned (condition estimate {cond:e}); weakest fast mode near {label}")]
    IllConditioned { cond: f64, label: String },
    #[error("fast subsystem has an unstable eigenvalue {re} + {im}i")]
    UnstableFast { re: f64, im: f64 },
    #[error("state matrix is not Hurwitz (max real part {0})")]
    NotHurwitz(f64),
    #[error("labeled state {0} not found")]
    MissingLabel(String),
    #[error("trim 1/rev load vector is zero; load direction undefined")]
    DegenerateLinearization,
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("frequency grids differ: {0}")]
    GridMismatch(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("unsupported schema_version {found} (expected {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("websocket: {0}")]
    WebSocket(String),
}

pub type Result<T> = std::result::Result<T, Error>;
