use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("degenerate walk: every jump rate is zero")]
    DegenerateWalk,

    #[error(
        "recurrent dimension d = {0}: the symmetrized walk is recurrent for d = 1, 2 and \
         transient for d >= 3, so G(0) is infinite and the criterion can never hold"
    )]
    RecurrentDimension(usize),

    #[error("accuracy not reached: best value {best} with error estimate {error_estimate}")]
    AccuracyNotReached { best: f64, error_estimate: f64 },

    #[error("h diverges: criterion value kappa2 G(0) / 2 = {0} is not below 1")]
    DivergentH(f64),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("step size underflow at t = {t} (step {step})")]
    Stiffness { t: f64, step: f64 },

    #[error("internal corruption: {0}")]
    Corruption(String),

    #[error("underpowered: {0}")]
    Underpowered(String),

    #[error("unknown {kind} '{name}' (known: {known})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: String,
    },
}

impl Error {
    /// Exit-code family used by the command-line front end: 2 for
    /// configuration problems, 3 for numerical failures.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::InvalidKernel(_)
                | Error::DegenerateWalk
                | Error::RecurrentDimension(_)
                | Error::DivergentH(_)
                | Error::UnsupportedKernel(_)
                | Error::UnknownStrategy { .. }
        )
    }
}
