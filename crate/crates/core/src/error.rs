use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid order {0}: must be non-negative")]
    InvalidOrder(f64),

    #[error("quadrature did not converge (estimate {estimate:e}, error {error:e})")]
    NonConvergence { estimate: f64, error: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("divergent: {0}")]
    Divergent(String),

    #[error("fractional derivative of order {0} is not supported for this function")]
    UnsupportedOrder(f64),

    #[error("step size underflow at p = {0}")]
    StepUnderflow(f64),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("infinite intensity measure on the truncated region: {0}")]
    InfiniteMeasure(String),

    #[error("rejection sampler collapsed: acceptance rate {rate:e} after {proposals} proposals")]
    RejectionCollapse { rate: f64, proposals: u64 },

    #[error("no cells included: {0}")]
    EmptyInclusion(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of numerical machinery as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::NonFinite(_)
                | Error::StepUnderflow(_)
                | Error::RejectionCollapse { .. }
                | Error::Inconclusive(_)
                | Error::Divergent(_)
        )
    }
}
