use thiserror::Error;

/// Errors raised across the library.
///
/// `Domain` covers inputs outside the region where the construction applies
/// (bad parameters, excluded region, critical speed). Everything else points
/// at a numerical failure.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("trapping breach: orbit left the trapping region by {violation:e}")]
    TrappingBreach { violation: f64 },

    #[error("slow convergence: reached t = {t} at distance {distance:e} from the end state (rho = {rho}, rho' = {rho_prime})")]
    SlowConvergence { t: f64, distance: f64, rho: f64, rho_prime: f64 },

    #[error("outside contraction regime: observed ratio {ratio}")]
    Contraction { ratio: f64 },

    #[error("gluing mismatch {mismatch:e} at switch time")]
    Gluing { mismatch: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub fn is_domain(&self) -> bool {
        matches!(self, Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
