use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnclaveError {
    #[error("enclave creation failed: {0}")]
    CreationFailure(String),

    #[error("no established session")]
    NoSession,

    #[error("handshake: {0}")]
    Handshake(String),

    #[error(transparent)]
    Channel(#[from] secure_channel::ChannelError),

    #[error(transparent)]
    Controller(#[from] control_core::ControlError),

    #[error("rollback detected: blob bound to counter {bound}, current counter is {current}")]
    RollbackDetected { bound: u64, current: u64 },

    #[error("authentication failure: sealed blob tag mismatch")]
    SealedBlobAuthentication,
}
