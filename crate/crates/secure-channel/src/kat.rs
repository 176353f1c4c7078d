//! AES-128-GCM known-answer tests.
//!
//! Vectors are the published 96-bit-IV, 128-bit-tag cases for 128-bit keys:
//! the four canonical GCM specification test cases plus NIST CAVP
//! `gcmEncryptExtIV128` entries. Each vector is checked in both directions
//! (encrypt must reproduce ciphertext and tag exactly; decrypt must recover
//! the plaintext and must reject a corrupted tag).

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes128Gcm, KeyInit, Nonce};

pub struct KatVector {
    pub name: &'static str,
    pub key: &'static str,
    pub iv: &'static str,
    pub plaintext: &'static str,
    pub aad: &'static str,
    /// Expected ciphertext immediately followed by the 16-byte tag, hex.
    pub ct_and_tag: &'static str,
}

pub const VECTORS: &[KatVector] = &[
    KatVector {
        name: "gcm_spec_case_1",
        key: "00000000000000000000000000000000",
        iv: "000000000000000000000000",
        plaintext: "",
        aad: "",
        ct_and_tag: "58e2fccefa7e3061367f1d57a4e7455a",
    },
    KatVector {
        name: "gcm_spec_case_2",
        key: "00000000000000000000000000000000",
        iv: "000000000000000000000000",
        plaintext: "00000000000000000000000000000000",
        aad: "",
        ct_and_tag: "0388dace60b6a392f328c2b971b2fe78ab6e47d42cec13bdf53a67b21257bddf",
    },
    KatVector {
        name: "gcm_spec_case_3",
        key: "feffe9928665731c6d6a8f9467308308",
        iv: "cafebabefacedbaddecaf888",
        plaintext: "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a72\
                    1c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b391aafd255",
        aad: "",
        ct_and_tag: "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e\
                     21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091473f5985\
                     4d5c2af327cd64a62cf35abd2ba6fab4",
    },
    KatVector {
        name: "gcm_spec_case_4",
        key: "feffe9928665731c6d6a8f9467308308",
        iv: "cafebabefacedbaddecaf888",
        plaintext: "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a72\
                    1c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39",
        aad: "feedfacedeadbeeffeedfacedeadbeefabaddad2",
        ct_and_tag: "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e\
                     21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091\
                     5bc94fbc3221a5db94fae95ae7121a47",
    },
    KatVector {
        name: "cavp_extiv128_pt0_aad0_count0",
        key: "11754cd72aec309bf52f7687212e8957",
        iv: "3c819d9a9bed087615030b65",
        plaintext: "",
        aad: "",
        ct_and_tag: "250327c674aaf477aef2675748cf6971",
    },
    KatVector {
        name: "cavp_extiv128_pt0_aad0_count1",
        key: "ca47248ac0b6f8372a97ac43508308ed",
        iv: "ffd2b598feabc9019262d2be",
        plaintext: "",
        aad: "",
        ct_and_tag: "60d20404af527d248d893ae495707d1a",
    },
    KatVector {
        name: "cavp_extiv128_pt128_aad0_count0",
        key: "7fddb57453c241d03efbed3ac44e371c",
        iv: "ee283a3fc75575e33efd4887",
        plaintext: "d5de42b461646c255c87bd2962d3b9a2",
        aad: "",
        ct_and_tag: "2ccda4a5415cb91e135c2a0f78c9b2fdb36d1df9b9d5e596f83e8b7f52971cb3",
    },
    KatVector {
        name: "cavp_extiv128_pt128_aad128_count0",
        key: "c939cc13397c1d37de6ae0e1cb7c423c",
        iv: "b3d8cc017cbb89b39e0f67e2",
        plaintext: "c3b3c41f113a31b73d9a5cd432103069",
        aad: "24825602bd12a984e0092d3e448eda5f",
        ct_and_tag: "93fe7d9e9bfd10348a5606e5cafa73540032a1dc85f1c9786925a2e71d8272dd",
    },
];

#[derive(Debug, Clone)]
pub struct KatOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn run_vector(v: &KatVector) -> Result<(), String> {
    let key = hex::decode(v.key).map_err(|e| e.to_string())?;
    let iv = hex::decode(v.iv).map_err(|e| e.to_string())?;
    let pt = hex::decode(v.plaintext).map_err(|e| e.to_string())?;
    let aad = hex::decode(v.aad).map_err(|e| e.to_string())?;
    let expected = hex::decode(v.ct_and_tag).map_err(|e| e.to_string())?;

    let cipher = Aes128Gcm::new_from_slice(&key).map_err(|e| e.to_string())?;
    let nonce = Nonce::from_slice(&iv);

    let sealed = cipher
        .encrypt(nonce, Payload { msg: &pt, aad: &aad })
        .map_err(|_| "encrypt failed".to_string())?;
    if sealed != expected {
        return Err(format!(
            "encrypt mismatch: expected {}, got {}",
            v.ct_and_tag,
            hex::encode(&sealed)
        ));
    }

    let opened = cipher
        .decrypt(nonce, Payload { msg: &expected, aad: &aad })
        .map_err(|_| "decrypt of valid vector failed".to_string())?;
    if opened != pt {
        return Err("decrypt mismatch".into());
    }

    let mut corrupted = expected.clone();
    let last = corrupted.len() - 1;
    corrupted[last] ^= 0x01;
    if cipher
        .decrypt(nonce, Payload { msg: &corrupted, aad: &aad })
        .is_ok()
    {
        return Err("corrupted tag was accepted".into());
    }
    Ok(())
}

/// Run every vector; returns one outcome per vector.
pub fn run_known_answer_suite() -> Vec<KatOutcome> {
    VECTORS
        .iter()
        .map(|v| match run_vector(v) {
            Ok(()) => KatOutcome {
                name: v.name,
                passed: true,
                detail: "ok".into(),
            },
            Err(e) => KatOutcome {
                name: v.name,
                passed: false,
                detail: e,
            },
        })
        .collect()
}
