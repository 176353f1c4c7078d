use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Plant(#[from] qtp_plant::PlantError),

    #[error(transparent)]
    Control(#[from] control_core::ControlError),

    #[error(transparent)]
    Enclave(#[from] trusted_boundary::EnclaveError),

    #[error(transparent)]
    Channel(#[from] secure_channel::ChannelError),

    #[error("handshake failed: {0}")]
    Handshake(String),

    #[error("run config: {0}")]
    Config(String),

    #[error("real-time feasibility violated: mean secure loop {mean_us:.1} us >= Ts {ts_us:.1} us")]
    RealTimeInfeasible { mean_us: f64, ts_us: f64 },

    #[error("channel failure: {consecutive_holds} consecutive missed control updates")]
    ChannelFailure { consecutive_holds: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
