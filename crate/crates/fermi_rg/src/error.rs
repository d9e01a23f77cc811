use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("scale index {j} outside [{lo}, {hi}]")]
    ScaleRange { j: i32, lo: i32, hi: i32 },
    #[error("momentum outside the support of every scale function")]
    NotInSupport,
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("divergent geometric series: M^j X(0) = {0} >= 1")]
    DivergentSeries(f64),
    #[error("singular point: {0}")]
    Singular(String),
    #[error("ill-conditioned denominator |D| = {0:e}")]
    Conditioning(f64),
    #[error("grid too coarse: {0}")]
    Resolution(String),
    #[error("ladder sum does not decay (ratios {0:?})")]
    LadderDivergence(Vec<f64>),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("extrapolation did not converge: {0}")]
    Extrapolation(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
