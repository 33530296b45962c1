use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("chain is not transient: (-G) is singular or (-G)h = 1 has no nonnegative solution")]
    NonTransient,
    #[error("negative off-diagonal rate q({0},{1}) = {2}")]
    NegativeRate(String, String, f64),
    #[error("reference measure weight m({0}) must be strictly positive")]
    ZeroMeasureWeight(String),
    #[error("point outside the model's state space: {0}")]
    OutOfDomain(String),
    #[error("quadrature failed to reach tolerance {wanted:e} (achieved {achieved:e})")]
    QuadratureFailure { wanted: f64, achieved: f64 },
    #[error("moment is infinite: {0}")]
    InfiniteMoment(String),
    #[error("matrix exponential did not converge")]
    MatrixExponentialFailure,
    #[error("Poisson series truncation failed to reach tail bound")]
    SeriesTruncationFailure,
    #[error("u(z,z) is infinite at the requested root; loop sampling needs a finite diagonal")]
    NonFiniteDiagonal,
    #[error("loop has infinite lifetime")]
    InfiniteLifetime,
    #[error("effective sample size {ess:.1} below {required:.1}; importance weights are degenerate")]
    InsufficientEffectiveSampleSize { ess: f64, required: f64 },
    #[error("permutation regime too large: k = {0} (maximum 8)")]
    RegimeTooLarge(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model or spec file: {0}")]
    Parse(#[from] serde_json::Error),
}
