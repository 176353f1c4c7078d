use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlantError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("linearization point is singular: equilibrium level of tank {0} must be > 0")]
    SingularEquilibrium(usize),

    #[error("invalid time step: {0}")]
    InvalidStep(String),

    #[error("plant config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
