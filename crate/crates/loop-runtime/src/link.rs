//! Transports carrying wire frames to the enclave service and back.
//!
//! `InProcessLink` calls the enclave directly and preserves typed rejection
//! classes. `TcpLink`/`TcpEnclaveHost` carry the same frames over a local
//! socket with a 4-byte big-endian length prefix; an empty reply means the
//! frame produced no response (rejected or dropped server-side).

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;

use secure_channel::ChannelError;
use trusted_boundary::{Enclave, EnclaveError};

use crate::LoopError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectClass {
    Malformed,
    AuthenticationFailure,
    Replay,
    UnknownSession,
    ControllerFault,
    Other,
}

impl RejectClass {
    pub fn from_enclave_error(e: &EnclaveError) -> Self {
        match e {
            EnclaveError::Channel(c) => Self::from_channel_error(c),
            EnclaveError::Controller(_) => RejectClass::ControllerFault,
            _ => RejectClass::Other,
        }
    }

    pub fn from_channel_error(e: &ChannelError) -> Self {
        match e {
            ChannelError::MalformedFrame(_) | ChannelError::Payload(_) => RejectClass::Malformed,
            ChannelError::AuthenticationFailure => RejectClass::AuthenticationFailure,
            ChannelError::ReplayDetected { .. } => RejectClass::Replay,
            ChannelError::UnknownSession { .. } => RejectClass::UnknownSession,
            _ => RejectClass::Other,
        }
    }
}

/// Outcome of submitting one frame to the enclave service.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exchange {
    Reply(Vec<u8>),
    Rejected(RejectClass),
    /// No reply and no local rejection information (remote transport).
    Silent,
}

pub trait EnclaveLink {
    fn exchange(&mut self, frame: &[u8]) -> Result<Exchange, LoopError>;
}

/// Direct in-process dispatch to the enclave's E-Calls.
pub struct InProcessLink<'a> {
    enclave: &'a Enclave,
}

impl<'a> InProcessLink<'a> {
    pub fn new(enclave: &'a Enclave) -> Self {
        Self { enclave }
    }
}

fn dispatch(enclave: &Enclave, frame: &[u8]) -> Result<Vec<u8>, EnclaveError> {
    // byte 5 is msg_type in the fixed header layout
    match frame.get(5) {
        Some(0x10) | Some(0x12) => enclave.handle_handshake(frame),
        _ => enclave.ecall_control_step(frame),
    }
}

impl EnclaveLink for InProcessLink<'_> {
    fn exchange(&mut self, frame: &[u8]) -> Result<Exchange, LoopError> {
        match dispatch(self.enclave, frame) {
            Ok(reply) => Ok(Exchange::Reply(reply)),
            Err(e) => Ok(Exchange::Rejected(RejectClass::from_enclave_error(&e))),
        }
    }
}

fn write_prefixed(stream: &mut TcpStream, bytes: &[u8]) -> std::io::Result<()> {
    stream.write_all(&(bytes.len() as u32).to_be_bytes())?;
    stream.write_all(bytes)
}

fn read_prefixed(stream: &mut TcpStream) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    stream.read_exact(&mut len)?;
    let mut buf = vec![0u8; u32::from_be_bytes(len) as usize];
    stream.read_exact(&mut buf)?;
    Ok(buf)
}

/// Hosts an enclave behind a local TCP socket. One connection at a time;
/// serves until the client disconnects.
pub struct TcpEnclaveHost {
    addr: SocketAddr,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl TcpEnclaveHost {
    pub fn spawn(enclave: Arc<Enclave>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let handle = std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                loop {
                    let frame = match read_prefixed(&mut stream) {
                        Ok(f) => f,
                        Err(_) => break,
                    };
                    let reply = dispatch(&enclave, &frame).unwrap_or_default();
                    if write_prefixed(&mut stream, &reply).is_err() {
                        break;
                    }
                }
            }
        });
        Ok(Self {
            addr,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for TcpEnclaveHost {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            // the host thread ends when the client side closes its stream
            let _ = h.join();
        }
    }
}

pub struct TcpLink {
    stream: TcpStream,
}

impl TcpLink {
    pub fn connect(addr: SocketAddr) -> std::io::Result<Self> {
        Ok(Self {
            stream: TcpStream::connect(addr)?,
        })
    }
}

impl EnclaveLink for TcpLink {
    fn exchange(&mut self, frame: &[u8]) -> Result<Exchange, LoopError> {
        write_prefixed(&mut self.stream, frame)?;
        let reply = read_prefixed(&mut self.stream)?;
        if reply.is_empty() {
            Ok(Exchange::Silent)
        } else {
            Ok(Exchange::Reply(reply))
        }
    }
}
