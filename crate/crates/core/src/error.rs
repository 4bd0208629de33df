use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("price {price} violates static bounds ({lower}, {upper})")]
    NoSolution { price: f64, lower: f64, upper: f64 },

    #[error("Riccati solution blew up at u = {re}{im:+}i (|h| = {magnitude:e})")]
    RiccatiBlowup { re: f64, im: f64, magnitude: f64 },

    #[error("Fourier quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("covariance matrix not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("training diverged at epoch {0}: loss is not finite")]
    Divergence(usize),

    #[error("malformed file {path} at line {line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("incompatible weights file: {0}")]
    Incompatible(String),

    #[error("{admissible} admissible quotes, at least {required} needed ({rejected} rejected)")]
    NoAdmissibleQuotes {
        admissible: usize,
        required: usize,
        rejected: usize,
    },

    #[error("all {0} calibration starts failed")]
    AllStartsFailed(usize),

    #[error("all strikes failed implied-vol inversion")]
    AllStrikesFailed,

    #[error("sampler rejected {0} consecutive draws; parameter box is misconfigured")]
    SamplerExhausted(usize),

    #[error("inadmissible quotes at indices {0:?}")]
    Inadmissible(Vec<usize>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
