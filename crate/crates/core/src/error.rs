use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular point: {0}")]
    SingularPoint(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("quadrature did not converge: refinement disagreement {disagreement:.3e}")]
    QuadratureNonConvergent { disagreement: f64 },

    #[error("derivative kernel requested at zero time")]
    ZeroTime,

    #[error("time slab too coarse: two-level relative disagreement {disagreement:.3e}")]
    InsufficientSlab { disagreement: f64 },

    #[error("derivative entry ({i},{j}) is not available in the first-step form")]
    MissingDerivative { i: usize, j: usize },

    #[error("non-finite field at iteration {k}, time node {node}")]
    NonFiniteField { k: usize, node: usize },

    #[error("no contraction at the smallest tested horizon {horizon:.3e}")]
    NoContraction { horizon: f64 },

    #[error("viscosity sequence is not Cauchy")]
    NotCauchy,

    #[error("decay certificate missing: {0}")]
    CertificateMissing(String),

    #[error("field format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
