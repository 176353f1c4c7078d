//! Session state and the seal/open operations.
//!
//! A context owns one direction of traffic: `send_seq` counts sealed frames,
//! `recv_watermark` is the highest accepted peer sequence. Acceptance is
//! strictly monotone; a reordered-but-genuine frame is rejected the same way
//! a replay is, because for a sampled control loop a stale value is as
//! useless as a forged one.

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes128Gcm, KeyInit, Nonce};
use sha2::{Digest, Sha256};

use crate::frame::{Direction, FrameHeader, MsgType, SecureMessage, TAG_LEN};
use crate::ChannelError;

pub const KEY_LEN: usize = 16;
pub const SALT_LEN: usize = 4;

/// One side of an established session. The key is private to this struct and
/// is never serialized; reports identify sessions by [`SessionContext::key_fingerprint`].
#[derive(Clone)]
pub struct SessionContext {
    session_id: u64,
    key: [u8; KEY_LEN],
    send_salt: [u8; SALT_LEN],
    recv_salt: [u8; SALT_LEN],
    send_direction: Direction,
    send_seq: u64,
    recv_watermark: u64,
}

impl std::fmt::Debug for SessionContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionContext")
            .field("session_id", &self.session_id)
            .field("send_direction", &self.send_direction)
            .field("send_seq", &self.send_seq)
            .field("recv_watermark", &self.recv_watermark)
            .finish_non_exhaustive()
    }
}

fn nonce_bytes(salt: &[u8; SALT_LEN], seq: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[0..4].copy_from_slice(salt);
    n[4..12].copy_from_slice(&seq.to_be_bytes());
    n
}

impl SessionContext {
    /// Assemble a context from raw material. This is the single entry point
    /// for key material (used by the handshake derivation and by interop
    /// fixtures); nothing on this type hands the key back out. Sequence
    /// numbering starts at 1 so a zero watermark accepts the first frame.
    pub fn from_material(
        session_id: u64,
        key: [u8; KEY_LEN],
        send_salt: [u8; SALT_LEN],
        recv_salt: [u8; SALT_LEN],
        send_direction: Direction,
    ) -> Self {
        Self {
            session_id,
            key,
            send_salt,
            recv_salt,
            send_direction,
            send_seq: 1,
            recv_watermark: 0,
        }
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn send_seq(&self) -> u64 {
        self.send_seq
    }

    pub fn recv_watermark(&self) -> u64 {
        self.recv_watermark
    }

    pub fn send_direction(&self) -> Direction {
        self.send_direction
    }

    /// One-way identifier of the session key for logs and reports.
    pub fn key_fingerprint(&self) -> [u8; 8] {
        let mut h = Sha256::new();
        h.update(b"tclp key fingerprint");
        h.update(self.key);
        let d = h.finalize();
        d[0..8].try_into().unwrap()
    }

    fn cipher(&self) -> Aes128Gcm {
        Aes128Gcm::new_from_slice(&self.key).expect("128-bit key")
    }

    /// Seal a payload into a wire frame. The header (including the sequence
    /// that also forms the nonce) is authenticated as AAD; `send_seq`
    /// increments after use so no nonce ever repeats within the session.
    pub fn seal_message(
        &mut self,
        msg_type: MsgType,
        payload: &[u8],
    ) -> Result<SecureMessage, ChannelError> {
        if self.send_seq == u64::MAX {
            return Err(ChannelError::SessionRenewalRequired);
        }
        if payload.len() > u32::MAX as usize {
            return Err(ChannelError::Payload("payload exceeds u32 length".into()));
        }
        let header = FrameHeader {
            msg_type,
            session_id: self.session_id,
            direction: self.send_direction,
            seq: self.send_seq,
            payload_len: payload.len() as u32,
        };
        let aad = header.encode();
        let nonce = nonce_bytes(&self.send_salt, self.send_seq);
        let mut sealed = self
            .cipher()
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: payload,
                    aad: &aad,
                },
            )
            .map_err(|_| ChannelError::Payload("encryption failed".into()))?;
        self.send_seq += 1;

        let tag_start = sealed.len() - TAG_LEN;
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&sealed[tag_start..]);
        sealed.truncate(tag_start);
        Ok(SecureMessage {
            header,
            ciphertext: sealed,
            tag,
        })
    }

    /// Verify and open a received frame, returning the plaintext payload.
    ///
    /// Check order matters for error classification: structural checks first
    /// (MalformedFrame), then the GCM tag over the full header as AAD
    /// (AuthenticationFailure — this catches any bit flip in header,
    /// ciphertext or tag), then freshness (ReplayDetected). The watermark
    /// only advances for frames that authenticated.
    pub fn open_message(&mut self, msg: &SecureMessage) -> Result<Vec<u8>, ChannelError> {
        if msg.header.payload_len as usize != msg.ciphertext.len() {
            return Err(ChannelError::MalformedFrame(format!(
                "payload_len {} vs ciphertext {}",
                msg.header.payload_len,
                msg.ciphertext.len()
            )));
        }
        let expected_dir = self.send_direction.opposite();
        if msg.header.direction != expected_dir {
            return Err(ChannelError::MalformedFrame(format!(
                "unexpected direction {:?}",
                msg.header.direction
            )));
        }

        let aad = msg.header.encode();
        let nonce = nonce_bytes(&self.recv_salt, msg.header.seq);
        let mut buf = Vec::with_capacity(msg.ciphertext.len() + TAG_LEN);
        buf.extend_from_slice(&msg.ciphertext);
        buf.extend_from_slice(&msg.tag);
        let plain = self
            .cipher()
            .decrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: &buf,
                    aad: &aad,
                },
            )
            .map_err(|_| ChannelError::AuthenticationFailure)?;

        // Unreachable for honest peers (a different session means a different
        // key, so the tag check already failed); kept as a defensive check.
        if msg.header.session_id != self.session_id {
            return Err(ChannelError::UnknownSession {
                got: msg.header.session_id,
                expected: self.session_id,
            });
        }
        if msg.header.seq <= self.recv_watermark {
            return Err(ChannelError::ReplayDetected {
                seq: msg.header.seq,
                watermark: self.recv_watermark,
            });
        }
        self.recv_watermark = msg.header.seq;
        Ok(plain)
    }

    /// Open a frame and decode it as a signal payload, checking that the
    /// frame type and the payload kind agree.
    pub fn open_signal(
        &mut self,
        msg: &SecureMessage,
    ) -> Result<crate::SignalPayload, ChannelError> {
        let plain = self.open_message(msg)?;
        let payload = crate::decode_payload(&plain)?;
        let consistent = matches!(
            (msg.header.msg_type, payload.kind),
            (MsgType::Sensor, crate::SignalKind::Sensor)
                | (MsgType::Control, crate::SignalKind::Control)
        );
        if !consistent {
            return Err(ChannelError::MalformedFrame(format!(
                "frame type {:?} carries payload kind {:?}",
                msg.header.msg_type, payload.kind
            )));
        }
        Ok(payload)
    }
}
