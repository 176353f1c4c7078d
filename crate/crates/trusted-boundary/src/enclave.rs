//! The enclave proper: controller state and session keys behind a
//! serialized call boundary.
//!
//! Every public method is one boundary interaction. E-Calls pay the
//! crossing cost on entry and exit; the O-Call stopwatch pays an exit and a
//! re-entry around the clock read, which is exactly why two adjacent
//! timestamp reads differ by the round-trip overhead (the delta-t of the
//! timing methodology). The inner mutex serializes concurrent E-Call
//! attempts; no state is reachable without going through it.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use control_core::{controller_step, ControllerState, SignSelection};
use nalgebra::Vector4;
use qtp_plant::Measurement;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use secure_channel::handshake::{decode_challenge, derive_session, DhSecret, Role, Transcript};
use secure_channel::{
    encode_payload, ChannelError, Direction, FrameHeader, MsgType, SecureMessage, SessionContext,
    SignalKind, SignalPayload,
};

use crate::attest::{report_data_binding, PlatformKey, Quote};
use crate::sealing::{derive_seal_key, seal, unseal, SealedBlob};
use crate::{EnclaveError, EnclaveImage, Measurement256};

/// Simulated one-way boundary crossing cost. The paper-style delta-t (the
/// cost of leaving the enclave for an O-Call and returning) is two one-way
/// crossings.
#[derive(Debug, Clone, Copy)]
pub struct CrossingCost {
    pub one_way: Duration,
}

impl CrossingCost {
    pub fn from_micros(us: u64) -> Self {
        Self {
            one_way: Duration::from_micros(us),
        }
    }

    pub fn delta_t(&self) -> Duration {
        2 * self.one_way
    }

    fn cross(&self) {
        if self.one_way.is_zero() {
            return;
        }
        let start = Instant::now();
        while start.elapsed() < self.one_way {
            std::hint::spin_loop();
        }
    }
}

impl Default for CrossingCost {
    fn default() -> Self {
        Self::from_micros(200)
    }
}

/// Receiver-side rejection tallies, exported for attack reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DetectionCounters {
    pub malformed: u64,
    pub auth_failures: u64,
    pub replays: u64,
    pub unknown_session: u64,
    pub controller_faults: u64,
}

impl DetectionCounters {
    pub fn total(&self) -> u64 {
        self.malformed + self.auth_failures + self.replays + self.unknown_session
    }

    fn record(&mut self, err: &ChannelError) {
        match err {
            ChannelError::MalformedFrame(_) | ChannelError::Payload(_) => self.malformed += 1,
            ChannelError::AuthenticationFailure => self.auth_failures += 1,
            ChannelError::ReplayDetected { .. } => self.replays += 1,
            ChannelError::UnknownSession { .. } => self.unknown_session += 1,
            _ => {}
        }
    }
}

struct PendingHandshake {
    transcript: Transcript,
    dh_secret: DhSecret,
}

struct EnclaveInner {
    measurement: Measurement256,
    controller: ControllerState,
    selection: SignSelection,
    session: Option<SessionContext>,
    pending: Option<PendingHandshake>,
    monotonic_counter: u64,
    seal_key: [u8; 16],
    rng: ChaCha20Rng,
    detections: DetectionCounters,
    epoch: Instant,
}

pub struct Enclave {
    inner: Mutex<EnclaveInner>,
    crossing: CrossingCost,
    platform: PlatformKey,
    creation_time: Duration,
}

/// Load an image into a fresh enclave: parse and validate the controller
/// config, record its measurement, derive the measurement-bound sealing key.
/// The wall-clock creation time is kept for the benchmark report.
pub fn create_enclave(
    image: &EnclaveImage,
    platform: PlatformKey,
    crossing: CrossingCost,
    rng_seed: u64,
) -> Result<Enclave, EnclaveError> {
    let start = Instant::now();
    let config = image.parse()?;
    let (controller, selection) = config
        .build()
        .map_err(|e| EnclaveError::CreationFailure(e.to_string()))?;
    let measurement = image.measurement();
    let seal_key = derive_seal_key(&platform.seed(), &measurement);
    let inner = EnclaveInner {
        measurement,
        controller,
        selection,
        session: None,
        pending: None,
        monotonic_counter: 0,
        seal_key,
        rng: ChaCha20Rng::seed_from_u64(rng_seed),
        detections: DetectionCounters::default(),
        epoch: start,
    };
    let creation_time = start.elapsed();
    Ok(Enclave {
        inner: Mutex::new(inner),
        crossing,
        platform,
        creation_time,
    })
}

impl EnclaveInner {
    /// Clock read via O-Call, as seen from inside: exit, read, re-enter.
    fn ocall_now(&self, crossing: &CrossingCost) -> Duration {
        crossing.cross();
        let t = self.epoch.elapsed();
        crossing.cross();
        t
    }

    fn serialize_controller_state(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32);
        for i in 0..4 {
            out.extend_from_slice(&self.controller.x_hat[i].to_be_bytes());
        }
        out
    }
}

impl Enclave {
    pub fn measurement(&self) -> Measurement256 {
        self.inner.lock().unwrap().measurement
    }

    pub fn creation_time(&self) -> Duration {
        self.creation_time
    }

    pub fn crossing_cost(&self) -> CrossingCost {
        self.crossing
    }

    pub fn sign_selection(&self) -> SignSelection {
        self.inner.lock().unwrap().selection
    }

    pub fn detection_counters(&self) -> DetectionCounters {
        self.inner.lock().unwrap().detections
    }

    pub fn monotonic_counter(&self) -> u64 {
        self.inner.lock().unwrap().monotonic_counter
    }

    pub fn has_session(&self) -> bool {
        self.inner.lock().unwrap().session.is_some()
    }

    /// Session key fingerprint for reports; None before the handshake.
    pub fn session_fingerprint(&self) -> Option<[u8; 8]> {
        self.inner
            .lock()
            .unwrap()
            .session
            .as_ref()
            .map(|s| s.key_fingerprint())
    }

    /// Produce an attestation quote for a challenge. Generates the enclave
    /// nonce and an ephemeral DH share, binds the share into the report data
    /// and keeps both for the rest of the handshake.
    pub fn attest(&self, challenge: &[u8; 32], plant_dh_public: [u8; 32]) -> (Quote, [u8; 32], [u8; 32]) {
        self.crossing.cross();
        let mut inner = self.inner.lock().unwrap();
        let mut enclave_nonce = [0u8; 32];
        inner.rng.fill_bytes(&mut enclave_nonce);
        let dh_secret = DhSecret::generate(&mut inner.rng);
        let dh_public = dh_secret.public();
        let report_data = report_data_binding(challenge, &dh_public.0);
        let quote = self.platform.sign_quote(&inner.measurement, &report_data);
        inner.pending = Some(PendingHandshake {
            transcript: Transcript {
                challenge: *challenge,
                plant_dh_public: secure_channel::handshake::DhPublic(plant_dh_public),
                enclave_nonce,
                enclave_dh_public: dh_public,
            },
            dh_secret,
        });
        self.crossing.cross();
        (quote, enclave_nonce, dh_public.0)
    }

    /// E-Call: one handshake message in, the response frame out.
    /// `0x10` (challenge) yields the `0x11` quote reply; `0x12` (key
    /// confirm, sealed under the freshly derived key) installs the session
    /// and yields the sealed `0x13` accept.
    pub fn handle_handshake(&self, wire: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        let msg = SecureMessage::from_bytes(wire).map_err(|e| {
            self.inner.lock().unwrap().detections.record(&e);
            EnclaveError::Channel(e)
        })?;
        match msg.header.msg_type {
            MsgType::HsChallenge => {
                let (challenge, plant_pub) = decode_challenge(&msg.ciphertext)
                    .map_err(EnclaveError::Channel)?;
                let (quote, nonce, dh_pub) = self.attest(&challenge, plant_pub.0);
                let payload = secure_channel::handshake::encode_quote_reply(
                    &nonce,
                    &secure_channel::handshake::DhPublic(dh_pub),
                    &quote.to_bytes(),
                );
                Ok(cleartext_frame(MsgType::HsQuote, Direction::EnclaveToPlant, &payload).to_bytes())
            }
            MsgType::HsKeyConfirm => {
                self.crossing.cross();
                let mut inner = self.inner.lock().unwrap();
                let pending = inner
                    .pending
                    .take()
                    .ok_or_else(|| EnclaveError::Handshake("no pending handshake".into()))?;
                let shared = pending
                    .dh_secret
                    .shared_secret(&pending.transcript.plant_dh_public);
                let (mut session, tokens) =
                    derive_session(Role::Enclave, &shared, &pending.transcript);
                let confirm = session.open_message(&msg).map_err(|e| {
                    inner.detections.record(&e);
                    EnclaveError::Handshake(format!("key confirm rejected: {e}"))
                })?;
                tokens
                    .verify_peer(&confirm)
                    .map_err(|e| EnclaveError::Handshake(e.to_string()))?;
                let accept = session
                    .seal_message(MsgType::HsAccept, &tokens.local)
                    .map_err(EnclaveError::Channel)?;
                inner.session = Some(session);
                self.crossing.cross();
                Ok(accept.to_bytes())
            }
            other => Err(EnclaveError::Handshake(format!(
                "unexpected handshake frame {other:?}"
            ))),
        }
    }

    /// E-Call: the per-sample control step. Opens the sensor frame inside
    /// the boundary, runs the controller, seals the control frame. On any
    /// channel rejection the detection counter advances and no frame is
    /// emitted; the plaintext never leaves, the key never enters the caller.
    pub fn ecall_control_step(&self, wire: &[u8]) -> Result<Vec<u8>, EnclaveError> {
        self.crossing.cross();
        let mut inner = self.inner.lock().unwrap();

        let result = (|inner: &mut EnclaveInner| {
            let msg = SecureMessage::from_bytes(wire)?;
            let session = match inner.session.as_mut() {
                Some(s) => s,
                None => return Err(ChannelError::UnknownSession { got: 0, expected: 0 }),
            };
            let payload = session.open_signal(&msg)?;
            if payload.kind != SignalKind::Sensor || payload.values.len() != 2 {
                return Err(ChannelError::Payload(format!(
                    "control step expects a 2-value sensor payload, got {:?} x{}",
                    payload.kind,
                    payload.values.len()
                )));
            }
            Ok(payload)
        })(&mut inner);

        let payload = match result {
            Ok(p) => p,
            Err(e) => {
                inner.detections.record(&e);
                self.crossing.cross();
                return Err(EnclaveError::Channel(e));
            }
        };

        let y = Measurement::new(nalgebra::Vector2::new(payload.values[0], payload.values[1]));
        let (u, next) = match controller_step(&inner.controller, &y) {
            Ok(r) => r,
            Err(e) => {
                inner.detections.controller_faults += 1;
                self.crossing.cross();
                return Err(EnclaveError::Controller(e));
            }
        };
        inner.controller = next;

        let out_payload = encode_payload(&SignalPayload::control(vec![
            u.voltages[0],
            u.voltages[1],
        ]))
        .map_err(EnclaveError::Channel)?;
        let session = inner.session.as_mut().expect("session checked above");
        let frame = session
            .seal_message(MsgType::Control, &out_payload)
            .map_err(EnclaveError::Channel)?;
        self.crossing.cross();
        Ok(frame.to_bytes())
    }

    /// O-Call stopwatch: monotonic time since enclave creation, read on the
    /// untrusted side of the boundary.
    pub fn ocall_timestamp(&self) -> Duration {
        let inner = self.inner.lock().unwrap();
        inner.ocall_now(&self.crossing)
    }

    /// E-Call: stopwatch window around `iters` in-enclave repetitions of an
    /// operation. The window is bracketed by two O-Call clock reads, so it
    /// carries one delta-t of crossing overhead on top of the work.
    pub fn ecall_bench(&self, op: BenchOp, iters: u32) -> Result<Duration, EnclaveError> {
        self.crossing.cross();
        let inner = self.inner.lock().unwrap();

        let window = match op {
            BenchOp::ControllerStep => {
                let y = Measurement::new(inner.controller.model.c * inner.controller.model.x_eq);
                let mut ctrl = inner.controller;
                let t1 = inner.ocall_now(&self.crossing);
                for _ in 0..iters {
                    let (u, next) = controller_step(&ctrl, &y).expect("valid bench state");
                    std::hint::black_box(u);
                    ctrl = next;
                }
                let t2 = inner.ocall_now(&self.crossing);
                std::hint::black_box(ctrl);
                t2 - t1
            }
            BenchOp::SealControlFrame => {
                let mut ctx = bench_context(Direction::EnclaveToPlant);
                let payload = encode_payload(&SignalPayload::control(vec![3.0, 3.0])).unwrap();
                let t1 = inner.ocall_now(&self.crossing);
                for _ in 0..iters {
                    let frame = ctx
                        .seal_message(MsgType::Control, &payload)
                        .expect("bench seal");
                    std::hint::black_box(frame);
                }
                let t2 = inner.ocall_now(&self.crossing);
                t2 - t1
            }
            BenchOp::OpenSensorFrame => {
                let mut sender = bench_context(Direction::PlantToEnclave);
                let mut receiver = bench_context(Direction::EnclaveToPlant);
                let payload = encode_payload(&SignalPayload::sensor(vec![6.2, 6.35])).unwrap();
                let frames: Vec<SecureMessage> = (0..iters)
                    .map(|_| sender.seal_message(MsgType::Sensor, &payload).expect("bench seal"))
                    .collect();
                let t1 = inner.ocall_now(&self.crossing);
                for f in &frames {
                    let plain = receiver.open_message(f).expect("bench open");
                    std::hint::black_box(plain);
                }
                let t2 = inner.ocall_now(&self.crossing);
                t2 - t1
            }
        };
        self.crossing.cross();
        Ok(window)
    }

    /// E-Call: adjacent O-Call clock reads; each difference is one observed
    /// boundary-crossing delta-t.
    pub fn ecall_measure_delta_t(&self, samples: u32) -> Vec<Duration> {
        self.crossing.cross();
        let inner = self.inner.lock().unwrap();
        let mut out = Vec::with_capacity(samples as usize);
        let mut prev = inner.ocall_now(&self.crossing);
        for _ in 0..samples {
            let t = inner.ocall_now(&self.crossing);
            out.push(t - prev);
            prev = t;
        }
        self.crossing.cross();
        out
    }

    /// Seal the controller state, optionally bumping the monotonic counter
    /// first. The returned blob is bound to the post-bump counter value.
    pub fn seal_state(&self, bump: bool) -> SealedBlob {
        self.crossing.cross();
        let mut inner = self.inner.lock().unwrap();
        if bump {
            inner.monotonic_counter += 1;
        }
        let mut nonce = [0u8; 12];
        inner.rng.fill_bytes(&mut nonce);
        let plaintext = inner.serialize_controller_state();
        let blob = seal(
            &inner.seal_key,
            &inner.measurement,
            inner.monotonic_counter,
            nonce,
            &plaintext,
        );
        self.crossing.cross();
        blob
    }

    /// Restore controller state from a sealed blob. Fails with
    /// `SealedBlobAuthentication` on any corruption and `RollbackDetected`
    /// when a genuine but stale blob is presented.
    pub fn unseal_state(&self, blob: &SealedBlob) -> Result<(), EnclaveError> {
        self.crossing.cross();
        let inner = &mut *self.inner.lock().unwrap();
        let result = unseal(
            &inner.seal_key,
            &inner.measurement,
            inner.monotonic_counter,
            blob,
        );
        let plaintext = match result {
            Ok(p) => p,
            Err(e) => {
                self.crossing.cross();
                return Err(e);
            }
        };
        if plaintext.len() != 32 {
            self.crossing.cross();
            return Err(EnclaveError::SealedBlobAuthentication);
        }
        inner.controller.x_hat = Vector4::from_fn(|i, _| {
            f64::from_be_bytes(plaintext[8 * i..8 * i + 8].try_into().unwrap())
        });
        self.crossing.cross();
        Ok(())
    }

    /// Controller estimate, exposed for plaintext-equivalence tests only.
    #[doc(hidden)]
    pub fn debug_x_hat(&self) -> Vector4<f64> {
        self.inner.lock().unwrap().controller.x_hat
    }
}

/// Bench sessions use a fixed throwaway key: the point is timing the AEAD,
/// not protecting data.
fn bench_context(dir: Direction) -> SessionContext {
    let (send, recv) = match dir {
        Direction::PlantToEnclave => (*b"bnp!", *b"bne!"),
        Direction::EnclaveToPlant => (*b"bne!", *b"bnp!"),
    };
    SessionContext::from_material(0xBE7C, [0x5Cu8; 16], send, recv, dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchOp {
    ControllerStep,
    SealControlFrame,
    OpenSensorFrame,
}

/// Frames that exist before any key does (handshake types 0x10/0x11):
/// ordinary layout, zero session, zero sequence, zero tag. Their authenticity
/// is established by the quote and the key confirmation, not at frame level.
pub fn cleartext_frame(msg_type: MsgType, direction: Direction, payload: &[u8]) -> SecureMessage {
    SecureMessage {
        header: FrameHeader {
            msg_type,
            session_id: 0,
            direction,
            seq: 0,
            payload_len: payload.len() as u32,
        },
        ciphertext: payload.to_vec(),
        tag: [0u8; 16],
    }
}
