use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChannelError {
    /// Frame structure violation: bad magic, version, type, direction or
    /// length bookkeeping. Raised before any cryptographic processing.
    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    /// AES-GCM tag verification failed; the frame (header or body) was
    /// modified in transit or sealed under a different key.
    #[error("authentication failure: GCM tag mismatch")]
    AuthenticationFailure,

    /// Sequence number at or below the acceptance watermark; a replayed or
    /// stale frame.
    #[error("replay detected: seq {seq} not above watermark {watermark}")]
    ReplayDetected { seq: u64, watermark: u64 },

    /// An authenticated frame that names a different session than the
    /// receiving context.
    #[error("unknown session: frame names {got:#018x}, context is {expected:#018x}")]
    UnknownSession { got: u64, expected: u64 },

    /// The send counter is exhausted; continuing would reuse a nonce.
    #[error("send sequence exhausted: session renewal required")]
    SessionRenewalRequired,

    #[error("payload: {0}")]
    Payload(String),

    #[error("handshake: {0}")]
    Handshake(String),
}
