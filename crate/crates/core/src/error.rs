use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trajectory from seed {seed} left the domain at t = {time}")]
    DomainExit { seed: usize, time: f64 },

    #[error("non-finite value in {what} at t = {time}")]
    NonFinite { what: &'static str, time: f64 },

    #[error("Jacobian {jacobian:e} fell below the floor {floor:e} at seed {seed}")]
    JacobianFloor { seed: usize, jacobian: f64, floor: f64 },

    #[error("CFL violation at t = {time}: Courant number {courant} > 1")]
    Cfl { time: f64, courant: f64 },

    #[error("expression error at offset {pos}: {msg}")]
    Expr { pos: usize, msg: String },

    #[error("missing time samples: {0}")]
    MissingSamples(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("initial data differ (max difference {0:e})")]
    InitialDataMismatch(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
