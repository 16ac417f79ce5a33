use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient `{coefficient}` is not finite at t={t}, x={x:?}")]
    NonFiniteCoefficient {
        coefficient: &'static str,
        t: f64,
        x: Vec<f64>,
    },

    #[error("Euler-Maruyama path blew up at step {step} (t={t})")]
    PathBlowup { step: usize, t: f64 },

    #[error("FK functional is not finite ({value}); the discount or source overflowed")]
    NonFiniteSample { value: f64 },

    #[error("FK sample failed at point {point}, sample {sample}: {source}")]
    Sampling {
        point: usize,
        sample: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("Cole-Hopf linearization infeasible: relative residual {residual:e}")]
    LinearizationInfeasible { residual: f64 },

    #[error("Cole-Hopf inverse needs positive values, got {value} at index {index}")]
    NonPositiveTransformed { index: usize, value: f64 },

    #[error("matrix not positive definite after jitter {max_jitter:e}")]
    Factorization { max_jitter: f64 },

    #[error("query {value} outside the slice [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("all {restarts} optimizer restarts failed")]
    Optimization { restarts: usize },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
