//! Authenticated-encryption channel between the plant and the enclave.
//!
//! The wire format is bit-exact: a 27-byte cleartext header (authenticated as
//! AAD, never encrypted), an AES-128-GCM ciphertext and a 16-byte tag. Nonces
//! are a per-direction 4-byte salt followed by the 8-byte big-endian send
//! sequence, so no nonce repeats within a session and replayed or reordered
//! frames are rejected by a strictly monotone acceptance watermark.
//!
//! Session keys are derived from an ephemeral Diffie-Hellman exchange bound
//! into the attestation flow; see [`handshake`].

pub mod frame;
pub mod handshake;
pub mod kat;
pub mod payload;
pub mod session;

mod error;

pub use error::ChannelError;
pub use frame::{Direction, FrameHeader, MsgType, SecureMessage, HEADER_LEN, MAGIC, TAG_LEN, VERSION};
pub use payload::{decode_payload, encode_payload, SignalKind, SignalPayload};
pub use session::{SessionContext, KEY_LEN, SALT_LEN};
