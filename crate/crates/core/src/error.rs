use thiserror::Error;

/// Failure modes shared by every numerical routine in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the operation's domain (n < 2, t ≤ 0, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// An integral or iteration does not converge for the given input.
    #[error("divergence: {0}")]
    Divergence(String),
    /// A computation finished but failed a numerical sanity condition.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! ensure_domain {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err($crate::error::Error::Domain(format!($($arg)*)));
        }
    };
}
pub(crate) use ensure_domain;
