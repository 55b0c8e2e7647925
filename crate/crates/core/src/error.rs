use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Array shapes or indices disagree with the declared dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// A caller broke an ordering contract (e.g. updating a bonus before its count).
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("snapshot: {0}")]
    Snapshot(String),
}

pub(crate) fn ensure_finite(name: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!("{name}[{i}] is not finite"))),
        None => Ok(()),
    }
}

pub(crate) fn ensure_discount(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "discount must lie strictly inside (0, 1), got {gamma}"
        )))
    }
}
