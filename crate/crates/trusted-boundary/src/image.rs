//! Enclave image: the canonical byte serialization of the controller
//! configuration. This is what gets deployed, measured and attested.
//!
//! Layout (version 1, all multi-byte values big-endian):
//!
//! ```text
//! magic "TIMG" (4) | version 0x01 (1) | ts (8)
//! | A row-major (16 x 8) | B (8 x 8) | C (8 x 8)
//! | x_eq (4 x 8) | u_eq (2 x 8) | L (8 x 8) | K (8 x 8)
//! | sign convention (1: 0 plus, 1 minus, 2 auto)
//! | x_hat0 present (1) | x_hat0 (4 x 8, zero when absent)
//! ```
//!
//! The encoding is total and injective on parsed configs, so identical
//! configurations produce identical images and any digit change anywhere
//! changes the measurement.

use control_core::{ControllerConfig, SignConvention};
use sha2::{Digest, Sha256};

use crate::EnclaveError;

pub const IMAGE_MAGIC: [u8; 4] = *b"TIMG";
pub const IMAGE_VERSION: u8 = 0x01;
pub const IMAGE_LEN: usize = 4 + 1 + 8 + (16 + 8 + 8 + 4 + 2 + 8 + 8) * 8 + 1 + 1 + 4 * 8;

/// SHA-256 digest of the exact image bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Measurement256(pub [u8; 32]);

impl Measurement256 {
    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnclaveImage {
    bytes: Vec<u8>,
}

impl EnclaveImage {
    pub fn from_config(cfg: &ControllerConfig) -> Self {
        let mut out = Vec::with_capacity(IMAGE_LEN);
        out.extend_from_slice(&IMAGE_MAGIC);
        out.push(IMAGE_VERSION);
        out.extend_from_slice(&cfg.ts.to_be_bytes());
        let mut put = |v: f64| out.extend_from_slice(&v.to_be_bytes());
        for row in &cfg.a {
            row.iter().for_each(|&v| put(v));
        }
        for row in &cfg.b {
            row.iter().for_each(|&v| put(v));
        }
        for row in &cfg.c {
            row.iter().for_each(|&v| put(v));
        }
        cfg.x_eq.iter().for_each(|&v| put(v));
        cfg.u_eq.iter().for_each(|&v| put(v));
        for row in &cfg.l {
            row.iter().for_each(|&v| put(v));
        }
        for row in &cfg.k {
            row.iter().for_each(|&v| put(v));
        }
        out.push(match cfg.sign_convention {
            Some(SignConvention::Plus) => 0,
            Some(SignConvention::Minus) => 1,
            None => 2,
        });
        match cfg.x_hat0 {
            Some(x0) => {
                out.push(1);
                x0.iter().for_each(|v| out.extend_from_slice(&v.to_be_bytes()));
            }
            None => {
                out.push(0);
                out.extend_from_slice(&[0u8; 32]);
            }
        }
        debug_assert_eq!(out.len(), IMAGE_LEN);
        Self { bytes: out }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn measurement(&self) -> Measurement256 {
        Measurement256(Sha256::digest(&self.bytes).into())
    }

    pub fn parse(&self) -> Result<ControllerConfig, EnclaveError> {
        let b = &self.bytes;
        if b.len() != IMAGE_LEN {
            return Err(EnclaveError::CreationFailure(format!(
                "image must be {IMAGE_LEN} bytes, got {}",
                b.len()
            )));
        }
        if b[0..4] != IMAGE_MAGIC {
            return Err(EnclaveError::CreationFailure("bad image magic".into()));
        }
        if b[4] != IMAGE_VERSION {
            return Err(EnclaveError::CreationFailure(format!(
                "unsupported image version {:#04x}",
                b[4]
            )));
        }
        let mut pos = 5;
        let mut take = || {
            let v = f64::from_be_bytes(b[pos..pos + 8].try_into().unwrap());
            pos += 8;
            v
        };
        let ts = take();
        let a = std::array::from_fn(|_| std::array::from_fn(|_| take()));
        let bm = std::array::from_fn(|_| std::array::from_fn(|_| take()));
        let c = std::array::from_fn(|_| std::array::from_fn(|_| take()));
        let x_eq = std::array::from_fn(|_| take());
        let u_eq = std::array::from_fn(|_| take());
        let l = std::array::from_fn(|_| std::array::from_fn(|_| take()));
        let k = std::array::from_fn(|_| std::array::from_fn(|_| take()));
        let sign = b[pos];
        pos += 1;
        let present = b[pos];
        pos += 1;
        let x0: [f64; 4] = std::array::from_fn(|i| {
            f64::from_be_bytes(b[pos + 8 * i..pos + 8 * i + 8].try_into().unwrap())
        });

        let sign_convention = match sign {
            0 => Some(SignConvention::Plus),
            1 => Some(SignConvention::Minus),
            2 => None,
            other => {
                return Err(EnclaveError::CreationFailure(format!(
                    "invalid sign convention byte {other:#04x}"
                )))
            }
        };
        let x_hat0 = match present {
            0 => None,
            1 => Some(x0),
            other => {
                return Err(EnclaveError::CreationFailure(format!(
                    "invalid x_hat0 presence byte {other:#04x}"
                )))
            }
        };
        Ok(ControllerConfig {
            a,
            b: bm,
            c,
            ts,
            x_eq,
            u_eq,
            l,
            k,
            sign_convention,
            x_hat0,
        })
    }
}
