use thiserror::Error;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("observer is unstable: spectral radius of (A - L C) is {0}")]
    UnstableObserver(f64),

    #[error("no stabilizing feedback convention: spectral radius {plus} with plus, {minus} with minus")]
    NoStabilizingConvention { plus: f64, minus: f64 },

    #[error("configured convention `{convention}` is destabilizing: closed-loop spectral radius {rho}")]
    DestabilizingOverride { convention: &'static str, rho: f64 },

    #[error("controller config: {0}")]
    Config(String),

    #[error(transparent)]
    Plant(#[from] qtp_plant::PlantError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
