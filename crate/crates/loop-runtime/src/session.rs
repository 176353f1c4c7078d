//! Plant-side session establishment: challenge the enclave, verify its quote
//! against the expected image measurement, run the key exchange and confirm
//! both directions — all through the (possibly adversarial) frame path.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secure_channel::handshake::{
    decode_quote_reply, derive_session, encode_challenge, DhSecret, Role, Transcript,
};
use secure_channel::{Direction, MsgType, SecureMessage, SessionContext};
use trusted_boundary::{
    cleartext_frame, verify_quote, Measurement256, PlatformVerifier, Quote,
};

use crate::loops::{FrameInterposer, Phase};
use crate::{EnclaveLink, Exchange, LoopError};

fn send_through(
    link: &mut dyn EnclaveLink,
    interposer: &mut dyn FrameInterposer,
    frame: Vec<u8>,
) -> Result<Option<Vec<u8>>, LoopError> {
    for delivery in interposer.plant_to_enclave(Phase::Handshake, frame) {
        if let Exchange::Reply(reply) = link.exchange(&delivery)? {
            for back in interposer.enclave_to_plant(Phase::Handshake, reply) {
                return Ok(Some(back));
            }
        }
    }
    Ok(None)
}

/// Run the attestation handshake and return the plant-side session context.
/// Fails closed: a missing reply, rejected quote or failed key confirmation
/// aborts with a typed error and no session is established.
pub fn establish_secure_session(
    link: &mut dyn EnclaveLink,
    interposer: &mut dyn FrameInterposer,
    verifier: &PlatformVerifier,
    expected_measurement: &Measurement256,
    seed: u64,
) -> Result<SessionContext, LoopError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let plant_dh = DhSecret::generate(&mut rng);
    let mut challenge = [0u8; 32];
    rng.fill_bytes(&mut challenge);

    let hello = cleartext_frame(
        MsgType::HsChallenge,
        Direction::PlantToEnclave,
        &encode_challenge(&challenge, &plant_dh.public()),
    );
    let reply = send_through(link, interposer, hello.to_bytes())?
        .ok_or_else(|| LoopError::Handshake("no quote reply".into()))?;
    let reply = SecureMessage::from_bytes(&reply)?;
    if reply.header.msg_type != MsgType::HsQuote {
        return Err(LoopError::Handshake(format!(
            "expected quote frame, got {:?}",
            reply.header.msg_type
        )));
    }
    let (enclave_nonce, enclave_pub, quote_bytes) = decode_quote_reply(&reply.ciphertext)?;
    let quote = Quote::from_bytes(&quote_bytes)
        .ok_or_else(|| LoopError::Handshake("quote truncated".into()))?;
    verify_quote(&quote, expected_measurement, &challenge, &enclave_pub.0, verifier)
        .map_err(|r| LoopError::Handshake(format!("quote rejected: {r}")))?;

    let transcript = Transcript {
        challenge,
        plant_dh_public: plant_dh.public(),
        enclave_nonce,
        enclave_dh_public: enclave_pub,
    };
    let shared = plant_dh.shared_secret(&enclave_pub);
    let (mut ctx, tokens) = derive_session(Role::Plant, &shared, &transcript);

    let confirm = ctx.seal_message(MsgType::HsKeyConfirm, &tokens.local)?;
    let accept = send_through(link, interposer, confirm.to_bytes())?
        .ok_or_else(|| LoopError::Handshake("no accept reply".into()))?;
    let accept = SecureMessage::from_bytes(&accept)?;
    if accept.header.msg_type != MsgType::HsAccept {
        return Err(LoopError::Handshake(format!(
            "expected accept frame, got {:?}",
            accept.header.msg_type
        )));
    }
    let token = ctx.open_message(&accept)?;
    tokens
        .verify_peer(&token)
        .map_err(|e| LoopError::Handshake(e.to_string()))?;
    Ok(ctx)
}
