//! Signal payload codec: kind byte, count byte, then IEEE-754 binary64
//! little-endian values. The encoding is exact, so sealing and opening a
//! payload is the identity on the carried floats bit for bit.

use crate::ChannelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum SignalKind {
    Sensor = 0x01,
    Control = 0x02,
}

impl SignalKind {
    pub fn from_byte(b: u8) -> Result<Self, ChannelError> {
        match b {
            0x01 => Ok(SignalKind::Sensor),
            0x02 => Ok(SignalKind::Control),
            other => Err(ChannelError::Payload(format!("unknown kind {other:#04x}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalPayload {
    pub kind: SignalKind,
    pub values: Vec<f64>,
}

impl SignalPayload {
    pub fn sensor(values: Vec<f64>) -> Self {
        Self {
            kind: SignalKind::Sensor,
            values,
        }
    }

    pub fn control(values: Vec<f64>) -> Self {
        Self {
            kind: SignalKind::Control,
            values,
        }
    }
}

pub fn encode_payload(payload: &SignalPayload) -> Result<Vec<u8>, ChannelError> {
    let count = payload.values.len();
    if count > u8::MAX as usize {
        return Err(ChannelError::Payload(format!(
            "value count {count} does not fit in one byte"
        )));
    }
    let mut out = Vec::with_capacity(2 + 8 * count);
    out.push(payload.kind as u8);
    out.push(count as u8);
    for v in &payload.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_payload(bytes: &[u8]) -> Result<SignalPayload, ChannelError> {
    if bytes.len() < 2 {
        return Err(ChannelError::Payload(format!(
            "payload truncated: {} bytes",
            bytes.len()
        )));
    }
    let kind = SignalKind::from_byte(bytes[0])?;
    let count = bytes[1] as usize;
    if bytes.len() != 2 + 8 * count {
        return Err(ChannelError::Payload(format!(
            "count {} does not match payload length {}",
            count,
            bytes.len()
        )));
    }
    let values = bytes[2..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(SignalPayload { kind, values })
}
