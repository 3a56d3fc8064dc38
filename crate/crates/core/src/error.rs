use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// |cos θ| fell to or below the singularity guard.
    #[error("singular attitude: |cos(theta)| = {cos_theta:.3e} is below the guard")]
    SingularAttitude { cos_theta: f64 },

    #[error("rotor input {index} is negative ({value})")]
    NegativeInput { index: usize, value: f64 },

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid QP: {0}")]
    InvalidQp(String),

    #[error("no trace rows at or after t = {cut} s")]
    EmptyWindow { cut: f64 },

    #[error("shooting interval {interval} failed: {source}")]
    Shooting {
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
