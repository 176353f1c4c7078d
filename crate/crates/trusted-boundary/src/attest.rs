//! Remote attestation against a platform signing key.
//!
//! The platform key stands in for the hardware attestation root; verifiers
//! are provisioned with its public half out of band. A quote binds the image
//! measurement to `report_data = SHA-256(challenge || enclave DH share)`,
//! so a quote can neither be replayed under a fresh challenge nor grafted
//! onto a different key exchange.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::Measurement256;

pub const QUOTE_LEN: usize = 32 + 32 + 64;

pub struct PlatformKey {
    signing: SigningKey,
}

impl PlatformKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self {
            signing: SigningKey::generate(rng),
        }
    }

    pub fn verifier(&self) -> PlatformVerifier {
        PlatformVerifier(self.signing.verifying_key())
    }

    pub(crate) fn sign_quote(&self, measurement: &Measurement256, report_data: &[u8; 32]) -> Quote {
        let mut msg = Vec::with_capacity(64);
        msg.extend_from_slice(&measurement.0);
        msg.extend_from_slice(report_data);
        Quote {
            measurement: *measurement,
            report_data: *report_data,
            signature: self.signing.sign(&msg).to_bytes(),
        }
    }

    /// Platform secret used to derive measurement-bound sealing keys.
    pub(crate) fn seed(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PlatformVerifier(VerifyingKey);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quote {
    pub measurement: Measurement256,
    pub report_data: [u8; 32],
    pub signature: [u8; 64],
}

impl Quote {
    pub fn to_bytes(&self) -> [u8; QUOTE_LEN] {
        let mut out = [0u8; QUOTE_LEN];
        out[0..32].copy_from_slice(&self.measurement.0);
        out[32..64].copy_from_slice(&self.report_data);
        out[64..].copy_from_slice(&self.signature);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != QUOTE_LEN {
            return None;
        }
        Some(Self {
            measurement: Measurement256(bytes[0..32].try_into().unwrap()),
            report_data: bytes[32..64].try_into().unwrap(),
            signature: bytes[64..].try_into().unwrap(),
        })
    }
}

/// Rejection reasons, one per verification conjunct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuoteRejection {
    SignatureInvalid,
    MeasurementMismatch,
    ReportDataMismatch,
}

impl std::fmt::Display for QuoteRejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            QuoteRejection::SignatureInvalid => write!(f, "signature invalid"),
            QuoteRejection::MeasurementMismatch => write!(f, "measurement mismatch"),
            QuoteRejection::ReportDataMismatch => write!(f, "report data mismatch"),
        }
    }
}

pub fn report_data_binding(challenge: &[u8; 32], enclave_dh_public: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"tclp v1 report data");
    h.update(challenge);
    h.update(enclave_dh_public);
    h.finalize().into()
}

/// Accept iff the platform signature verifies, the measurement equals the
/// expected one, and the report data matches the challenge binding — checked
/// in that order, first failure wins.
pub fn verify_quote(
    quote: &Quote,
    expected_measurement: &Measurement256,
    challenge: &[u8; 32],
    enclave_dh_public: &[u8; 32],
    platform: &PlatformVerifier,
) -> Result<(), QuoteRejection> {
    let mut msg = Vec::with_capacity(64);
    msg.extend_from_slice(&quote.measurement.0);
    msg.extend_from_slice(&quote.report_data);
    let sig = Signature::from_bytes(&quote.signature);
    if platform.0.verify(&msg, &sig).is_err() {
        return Err(QuoteRejection::SignatureInvalid);
    }
    if quote.measurement != *expected_measurement {
        return Err(QuoteRejection::MeasurementMismatch);
    }
    if quote.report_data != report_data_binding(challenge, enclave_dh_public) {
        return Err(QuoteRejection::ReportDataMismatch);
    }
    Ok(())
}
