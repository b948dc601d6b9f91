use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("product of an empty message list")]
    EmptyProduct,

    #[error("Dirac (zero-variance) term passed to Gaussian product/division")]
    DiracOperand,

    #[error("invalid Gaussian: mean {mean}, variance {variance}")]
    InvalidGaussian { mean: f64, variance: f64 },

    #[error("degenerate extrinsic message: factor variance {factor_var} <= belief variance {belief_var}")]
    DegenerateExtrinsic { belief_var: f64, factor_var: f64 },

    #[error("moment matching failed: {0}")]
    MomentMatchFailure(String),

    #[error("singular geometry: estimated distance {distance} m below guard")]
    SingularGeometry { distance: f64 },

    #[error("oracle failure: {0}")]
    OracleFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error in {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
