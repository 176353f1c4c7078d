//! Session establishment: ephemeral X25519 key agreement bound to the
//! attestation exchange, HKDF-SHA256 key schedule, and key-confirmation
//! tokens.
//!
//! The four handshake frame types ride the ordinary frame layout:
//!
//! * `0x10` challenge — plant's 32-byte challenge and DH share, cleartext
//!   (no key exists yet; authenticity comes from the quote that answers it).
//! * `0x11` quote — enclave nonce, enclave DH share and the attestation
//!   quote whose report data binds the challenge and the share.
//! * `0x12` key-confirm / `0x13` accept — the role-specific confirmation
//!   token, sealed under the freshly derived session key.
//!
//! Both sides feed the full transcript into the key schedule, so any
//! modified handshake byte yields divergent keys and a failed confirmation.

use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

use crate::frame::Direction;
use crate::session::{SessionContext, KEY_LEN, SALT_LEN};
use crate::ChannelError;

pub const CHALLENGE_LEN: usize = 32;
pub const DH_PUBLIC_LEN: usize = 32;
pub const CONFIRM_LEN: usize = 32;

/// HKDF info labels of the session key schedule. Fixed by the wire contract;
/// interoperating implementations must use the same strings.
pub const LABEL_KEY: &[u8] = b"tclp v1 session key";
pub const LABEL_SALT_P2E: &[u8] = b"tclp v1 salt plant-to-enclave";
pub const LABEL_SALT_E2P: &[u8] = b"tclp v1 salt enclave-to-plant";
pub const LABEL_SESSION_ID: &[u8] = b"tclp v1 session id";
pub const LABEL_CONFIRM_PLANT: &[u8] = b"tclp v1 confirm plant";
pub const LABEL_CONFIRM_ENCLAVE: &[u8] = b"tclp v1 confirm enclave";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Plant,
    Enclave,
}

/// Ephemeral X25519 secret.
pub struct DhSecret(x25519_dalek::StaticSecret);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DhPublic(pub [u8; DH_PUBLIC_LEN]);

impl DhSecret {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self(x25519_dalek::StaticSecret::random_from_rng(rng))
    }

    pub fn public(&self) -> DhPublic {
        DhPublic(*x25519_dalek::PublicKey::from(&self.0).as_bytes())
    }

    pub fn shared_secret(&self, peer: &DhPublic) -> [u8; 32] {
        *self
            .0
            .diffie_hellman(&x25519_dalek::PublicKey::from(peer.0))
            .as_bytes()
    }
}

/// Everything both sides observed during the exchange, in wire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transcript {
    pub challenge: [u8; CHALLENGE_LEN],
    pub plant_dh_public: DhPublic,
    pub enclave_nonce: [u8; CHALLENGE_LEN],
    pub enclave_dh_public: DhPublic,
}

impl Transcript {
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"tclp v1 transcript");
        h.update(self.challenge);
        h.update(self.plant_dh_public.0);
        h.update(self.enclave_nonce);
        h.update(self.enclave_dh_public.0);
        h.finalize().into()
    }
}

/// Role-specific key-confirmation tokens: `local` is what this side sends,
/// `expected_peer` is what it must receive.
#[derive(Debug, Clone, Copy)]
pub struct ConfirmTokens {
    pub local: [u8; CONFIRM_LEN],
    pub expected_peer: [u8; CONFIRM_LEN],
}

impl ConfirmTokens {
    pub fn verify_peer(&self, received: &[u8]) -> Result<(), ChannelError> {
        if received.len() == CONFIRM_LEN && bool::from(received.ct_eq(&self.expected_peer)) {
            Ok(())
        } else {
            Err(ChannelError::Handshake("confirmation token mismatch".into()))
        }
    }
}

/// Derive the shared session state from the DH secret and the transcript.
/// Deterministic: both roles over a faithful transcript derive the same key
/// and session id, with the per-direction salts swapped.
pub fn derive_session(
    role: Role,
    dh_shared: &[u8; 32],
    transcript: &Transcript,
) -> (SessionContext, ConfirmTokens) {
    let hk = Hkdf::<Sha256>::new(Some(&transcript.hash()), dh_shared);
    let expand = |label: &[u8], out: &mut [u8]| {
        hk.expand(label, out).expect("output within HKDF limits");
    };

    let mut key = [0u8; KEY_LEN];
    let mut salt_p2e = [0u8; SALT_LEN];
    let mut salt_e2p = [0u8; SALT_LEN];
    let mut sid = [0u8; 8];
    let mut confirm_plant = [0u8; CONFIRM_LEN];
    let mut confirm_enclave = [0u8; CONFIRM_LEN];
    expand(LABEL_KEY, &mut key);
    expand(LABEL_SALT_P2E, &mut salt_p2e);
    expand(LABEL_SALT_E2P, &mut salt_e2p);
    expand(LABEL_SESSION_ID, &mut sid);
    expand(LABEL_CONFIRM_PLANT, &mut confirm_plant);
    expand(LABEL_CONFIRM_ENCLAVE, &mut confirm_enclave);

    let session_id = u64::from_be_bytes(sid);
    let (ctx, tokens) = match role {
        Role::Plant => (
            SessionContext::from_material(
                session_id,
                key,
                salt_p2e,
                salt_e2p,
                Direction::PlantToEnclave,
            ),
            ConfirmTokens {
                local: confirm_plant,
                expected_peer: confirm_enclave,
            },
        ),
        Role::Enclave => (
            SessionContext::from_material(
                session_id,
                key,
                salt_e2p,
                salt_p2e,
                Direction::EnclaveToPlant,
            ),
            ConfirmTokens {
                local: confirm_enclave,
                expected_peer: confirm_plant,
            },
        ),
    };
    (ctx, tokens)
}

/// Payload codec for the `0x10` challenge frame.
pub fn encode_challenge(challenge: &[u8; CHALLENGE_LEN], plant_pub: &DhPublic) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHALLENGE_LEN + DH_PUBLIC_LEN);
    out.extend_from_slice(challenge);
    out.extend_from_slice(&plant_pub.0);
    out
}

pub fn decode_challenge(bytes: &[u8]) -> Result<([u8; CHALLENGE_LEN], DhPublic), ChannelError> {
    if bytes.len() != CHALLENGE_LEN + DH_PUBLIC_LEN {
        return Err(ChannelError::Handshake(format!(
            "challenge payload must be {} bytes, got {}",
            CHALLENGE_LEN + DH_PUBLIC_LEN,
            bytes.len()
        )));
    }
    let challenge = bytes[..CHALLENGE_LEN].try_into().unwrap();
    let public = DhPublic(bytes[CHALLENGE_LEN..].try_into().unwrap());
    Ok((challenge, public))
}

/// Payload codec for the `0x11` quote frame: enclave nonce, enclave DH
/// share, then the platform quote (opaque to this crate).
pub fn encode_quote_reply(
    enclave_nonce: &[u8; CHALLENGE_LEN],
    enclave_pub: &DhPublic,
    quote_bytes: &[u8],
) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHALLENGE_LEN + DH_PUBLIC_LEN + quote_bytes.len());
    out.extend_from_slice(enclave_nonce);
    out.extend_from_slice(&enclave_pub.0);
    out.extend_from_slice(quote_bytes);
    out
}

pub fn decode_quote_reply(
    bytes: &[u8],
) -> Result<([u8; CHALLENGE_LEN], DhPublic, Vec<u8>), ChannelError> {
    if bytes.len() < CHALLENGE_LEN + DH_PUBLIC_LEN {
        return Err(ChannelError::Handshake(format!(
            "quote payload too short: {} bytes",
            bytes.len()
        )));
    }
    let nonce = bytes[..CHALLENGE_LEN].try_into().unwrap();
    let public = DhPublic(
        bytes[CHALLENGE_LEN..CHALLENGE_LEN + DH_PUBLIC_LEN]
            .try_into()
            .unwrap(),
    );
    Ok((nonce, public, bytes[CHALLENGE_LEN + DH_PUBLIC_LEN..].to_vec()))
}
