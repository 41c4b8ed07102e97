use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("derivative order ({i}, {j}) exceeds the model maximum {max}")]
    OrderExceeded { i: usize, j: usize, max: usize },

    #[error("argument {0} lies outside [0, 1]")]
    Domain(f64),

    #[error("derivative kernel of order ({i}, {j}) is singular at ({s}, {t})")]
    Singularity { s: f64, t: f64, i: usize, j: usize },

    #[error("unknown model kind `{0}`")]
    UnknownModel(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("spline degree {0} is not supported (odd degrees 1, 3, 5 only)")]
    UnsupportedDegree(usize),

    #[error("invalid spline scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("density construction failed: {0}")]
    Density(String),

    #[error("condition is undecidable: {0}")]
    Undecidable(String),

    #[error("smoothness profile is incomplete: {0}")]
    IncompleteProfile(String),

    #[error("design is infeasible with {n} intervals; minimal feasible n is {}", .min_n.map_or_else(|| "not found up to 2^22".to_string(), |m| m.to_string()))]
    Infeasible { n: usize, min_n: Option<usize> },

    #[error("unsupported asymptotic constant (m = {m}, beta = {beta}, k = {k})")]
    UnsupportedConstant { m: usize, beta: f64, k: usize },

    #[error("local stationarity estimate did not converge: {0}")]
    Estimation(String),

    #[error("function is not integrable near 0: {0}")]
    NonIntegrable(String),

    #[error("norm diverges near 0: {0}")]
    DivergentNorm(String),

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
