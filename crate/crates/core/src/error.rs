use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge set contains a cycle through {0:?}")]
    Cycle(Vec<String>),

    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),

    #[error("invalid variable name `{0}`")]
    InvalidName(String),

    #[error("noise variance for `{variable}` is negative ({value})")]
    NegativeNoiseVariance { variable: String, value: f64 },

    #[error("no noise variance declared for `{0}`")]
    MissingNoise(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("self loop on `{0}`")]
    SelfLoop(String),

    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: String, to: String },

    #[error("model declares no observed variable")]
    NoObservedVariable,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("infeasible standardization: `{variable}` would need noise variance {required} < 0")]
    InfeasibleStandardization { variable: String, required: f64 },

    #[error("covariance matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid covariance matrix: {0}")]
    InvalidCovariance(String),

    #[error("singular design: regressor covariance condition number {condition:e} exceeds 1e12")]
    SingularDesign { condition: f64 },

    #[error("need more than {needed} observations, got {n}")]
    InsufficientObservations { n: usize, needed: usize },

    #[error("rho is zero; the 1a -> 1b reparameterization divides by rho")]
    ZeroRho,

    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("quantile count must be at least 2, got {0}")]
    InvalidQuantileCount(usize),

    #[error("q = {q} exceeds the number of observations n = {n}")]
    QTooLargeForN { q: usize, n: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{0}")]
    PolicyScenarioMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
