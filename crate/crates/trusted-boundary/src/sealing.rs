//! Sealed storage with rollback protection.
//!
//! State is encrypted under a key derived from the platform secret and the
//! image measurement, so only the same measured image on the same platform
//! can unseal it. The blob binds the monotonic counter value in the
//! authenticated header: a stale-but-genuine blob verifies its tag and then
//! fails the counter equality check, which is the rollback signal.

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes128Gcm, KeyInit, Nonce};
use hkdf::Hkdf;
use sha2::Sha256;

use crate::{EnclaveError, Measurement256};

const SEAL_AAD_PREFIX: &[u8] = b"tclp v1 sealed state";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedBlob {
    pub bound_counter: u64,
    pub nonce: [u8; 12],
    /// Ciphertext with the 16-byte tag appended.
    pub ciphertext: Vec<u8>,
}

pub(crate) fn derive_seal_key(platform_seed: &[u8; 32], measurement: &Measurement256) -> [u8; 16] {
    let hk = Hkdf::<Sha256>::new(None, platform_seed);
    let mut info = Vec::with_capacity(16 + 32);
    info.extend_from_slice(b"tclp v1 seal key");
    info.extend_from_slice(&measurement.0);
    let mut key = [0u8; 16];
    hk.expand(&info, &mut key).expect("within HKDF limits");
    key
}

fn seal_aad(measurement: &Measurement256, counter: u64) -> Vec<u8> {
    let mut aad = Vec::with_capacity(SEAL_AAD_PREFIX.len() + 32 + 8);
    aad.extend_from_slice(SEAL_AAD_PREFIX);
    aad.extend_from_slice(&measurement.0);
    aad.extend_from_slice(&counter.to_be_bytes());
    aad
}

pub(crate) fn seal(
    key: &[u8; 16],
    measurement: &Measurement256,
    counter: u64,
    nonce: [u8; 12],
    plaintext: &[u8],
) -> SealedBlob {
    let cipher = Aes128Gcm::new_from_slice(key).expect("128-bit key");
    let ciphertext = cipher
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: &seal_aad(measurement, counter),
            },
        )
        .expect("in-memory encryption cannot fail");
    SealedBlob {
        bound_counter: counter,
        nonce,
        ciphertext,
    }
}

pub(crate) fn unseal(
    key: &[u8; 16],
    measurement: &Measurement256,
    current_counter: u64,
    blob: &SealedBlob,
) -> Result<Vec<u8>, EnclaveError> {
    let cipher = Aes128Gcm::new_from_slice(key).expect("128-bit key");
    let plaintext = cipher
        .decrypt(
            Nonce::from_slice(&blob.nonce),
            Payload {
                msg: &blob.ciphertext,
                aad: &seal_aad(measurement, blob.bound_counter),
            },
        )
        .map_err(|_| EnclaveError::SealedBlobAuthentication)?;
    if blob.bound_counter != current_counter {
        return Err(EnclaveError::RollbackDetected {
            bound: blob.bound_counter,
            current: current_counter,
        });
    }
    Ok(plaintext)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ([u8; 16], Measurement256) {
        let m = Measurement256([0x5A; 32]);
        (derive_seal_key(&[7u8; 32], &m), m)
    }

    #[test]
    fn round_trip() {
        let (key, m) = fixture();
        let blob = seal(&key, &m, 3, [9u8; 12], b"controller state");
        assert_eq!(unseal(&key, &m, 3, &blob).unwrap(), b"controller state");
    }

    #[test]
    fn stale_counter_is_rollback() {
        let (key, m) = fixture();
        let blob = seal(&key, &m, 3, [9u8; 12], b"old");
        assert!(matches!(
            unseal(&key, &m, 4, &blob),
            Err(EnclaveError::RollbackDetected { bound: 3, current: 4 })
        ));
    }

    #[test]
    fn corrupted_blob_fails_authentication() {
        let (key, m) = fixture();
        let mut blob = seal(&key, &m, 1, [9u8; 12], b"data");
        blob.ciphertext[0] ^= 0x01;
        assert!(matches!(
            unseal(&key, &m, 1, &blob),
            Err(EnclaveError::SealedBlobAuthentication)
        ));
    }

    #[test]
    fn lying_about_the_counter_fails_authentication() {
        // The counter is part of the AAD, so editing the field breaks the tag
        // before the rollback check can even be reached.
        let (key, m) = fixture();
        let mut blob = seal(&key, &m, 3, [9u8; 12], b"old");
        blob.bound_counter = 4;
        assert!(matches!(
            unseal(&key, &m, 4, &blob),
            Err(EnclaveError::SealedBlobAuthentication)
        ));
    }

    #[test]
    fn different_measurement_cannot_unseal() {
        let (key, m) = fixture();
        let blob = seal(&key, &m, 1, [9u8; 12], b"data");
        let other = Measurement256([0x5B; 32]);
        let other_key = derive_seal_key(&[7u8; 32], &other);
        assert!(matches!(
            unseal(&other_key, &other, 1, &blob),
            Err(EnclaveError::SealedBlobAuthentication)
        ));
    }
}
