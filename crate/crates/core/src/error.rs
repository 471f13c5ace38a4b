use thiserror::Error;

use crate::optimize::OptimizerResult;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cleavage probability {0} is outside (0, 1)")]
    CleavageProbability(f64),

    #[error("ambiguous site {site} is outside 1..={num_sites}")]
    AmbiguousSite { site: usize, num_sites: usize },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("weighted composition sum is zero")]
    ZeroWeightedSum,

    #[error("dataset has no observed tags")]
    EmptySample,

    #[error("category `{id}`: tag formation probability {phi} is outside (0, 1]")]
    InvalidPhi { id: String, phi: f64 },

    #[error("duplicate category id `{0}`")]
    DuplicateId(String),

    #[error("hyperparameter {name} = {value} must be strictly positive and finite")]
    Hyperparameter { name: &'static str, value: f64 },

    #[error("not a composition: {0}")]
    NotComposition(String),

    #[error("invalid chain configuration: {0}")]
    Config(String),

    #[error("series is constant (zero variance)")]
    ZeroVariance,

    #[error("series of length {len} is too short for lag {lag}")]
    SeriesTooShort { len: usize, lag: usize },

    #[error("grid oracle supports k = 2 or 3, got k = {0}")]
    OracleDimension(usize),

    #[error("grid oracle needs at least {min} grid points, got {got}")]
    OracleResolution { min: usize, got: usize },

    #[error("mode iteration denominator {denominator} is not positive (r = {r}); prior too weak for the counts")]
    NonPositiveDenominator { denominator: f64, r: u64 },

    #[error("no convergence after {} iterations (residual {})", .last.iterations_used, .last.final_residual)]
    NotConverged { last: Box<OptimizerResult> },

    #[error("fixture targets not met after {attempts} attempts: {achieved}")]
    FixtureTargets { attempts: usize, achieved: String },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
