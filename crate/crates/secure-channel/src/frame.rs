//! Bit-exact frame layout:
//!
//! ```text
//! magic "TCLP" (4) | version 0x01 (1) | msg_type (1) | session_id (8 BE)
//! | direction (1) | seq (8 BE) | payload_len (4 BE) | ciphertext | tag (16)
//! ```
//!
//! The first 27 bytes are the header; they travel in clear and are
//! authenticated as the AAD of the AES-GCM seal.

use crate::ChannelError;

pub const MAGIC: [u8; 4] = *b"TCLP";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 27;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Sensor = 0x01,
    Control = 0x02,
    HsChallenge = 0x10,
    HsQuote = 0x11,
    HsKeyConfirm = 0x12,
    HsAccept = 0x13,
}

impl MsgType {
    pub fn from_byte(b: u8) -> Result<Self, ChannelError> {
        match b {
            0x01 => Ok(MsgType::Sensor),
            0x02 => Ok(MsgType::Control),
            0x10 => Ok(MsgType::HsChallenge),
            0x11 => Ok(MsgType::HsQuote),
            0x12 => Ok(MsgType::HsKeyConfirm),
            0x13 => Ok(MsgType::HsAccept),
            other => Err(ChannelError::MalformedFrame(format!(
                "unknown msg_type {other:#04x}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Direction {
    PlantToEnclave = 0x00,
    EnclaveToPlant = 0x01,
}

impl Direction {
    pub fn from_byte(b: u8) -> Result<Self, ChannelError> {
        match b {
            0x00 => Ok(Direction::PlantToEnclave),
            0x01 => Ok(Direction::EnclaveToPlant),
            other => Err(ChannelError::MalformedFrame(format!(
                "unknown direction {other:#04x}"
            ))),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Direction::PlantToEnclave => Direction::EnclaveToPlant,
            Direction::EnclaveToPlant => Direction::PlantToEnclave,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub msg_type: MsgType,
    pub session_id: u64,
    pub direction: Direction,
    pub seq: u64,
    pub payload_len: u32,
}

impl FrameHeader {
    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4] = VERSION;
        out[5] = self.msg_type as u8;
        out[6..14].copy_from_slice(&self.session_id.to_be_bytes());
        out[14] = self.direction as u8;
        out[15..23].copy_from_slice(&self.seq.to_be_bytes());
        out[23..27].copy_from_slice(&self.payload_len.to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ChannelError> {
        if bytes.len() < HEADER_LEN {
            return Err(ChannelError::MalformedFrame(format!(
                "header truncated: {} bytes",
                bytes.len()
            )));
        }
        if bytes[0..4] != MAGIC {
            return Err(ChannelError::MalformedFrame("bad magic".into()));
        }
        if bytes[4] != VERSION {
            return Err(ChannelError::MalformedFrame(format!(
                "unsupported version {:#04x}",
                bytes[4]
            )));
        }
        Ok(Self {
            msg_type: MsgType::from_byte(bytes[5])?,
            session_id: u64::from_be_bytes(bytes[6..14].try_into().unwrap()),
            direction: Direction::from_byte(bytes[14])?,
            seq: u64::from_be_bytes(bytes[15..23].try_into().unwrap()),
            payload_len: u32::from_be_bytes(bytes[23..27].try_into().unwrap()),
        })
    }
}

/// A complete wire frame: cleartext header, ciphertext, 16-byte GCM tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecureMessage {
    pub header: FrameHeader,
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl SecureMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.header.encode());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChannelError> {
        let header = FrameHeader::decode(bytes)?;
        let expected = HEADER_LEN
            + header.payload_len as usize
            + TAG_LEN;
        if bytes.len() != expected {
            return Err(ChannelError::MalformedFrame(format!(
                "length mismatch: payload_len says {} total, frame is {}",
                expected,
                bytes.len()
            )));
        }
        let ct_end = HEADER_LEN + header.payload_len as usize;
        let mut tag = [0u8; TAG_LEN];
        tag.copy_from_slice(&bytes[ct_end..]);
        Ok(Self {
            header,
            ciphertext: bytes[HEADER_LEN..ct_end].to_vec(),
            tag,
        })
    }
}
