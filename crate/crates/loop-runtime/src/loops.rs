//! The closed loop itself.
//!
//! Per step: measure, seal on the plant side, traverse the (possibly
//! adversarial) channel, E-Call into the enclave (open, control, seal),
//! traverse the channel back, open on the plant side, actuate. Plaintext
//! mode bypasses the crypto and the boundary but runs the identical control
//! arithmetic, which is what makes the transparency check meaningful.
//!
//! A missed or rejected control update holds the last accepted input
//! (zero-order hold on attack); the estimate column of the log is the
//! plant-side telemetry reconstruction, bit-identical to the in-enclave
//! estimate whenever no frames were lost.

use std::time::Instant;

use control_core::{controller_step, ControllerState, SignSelection};
use nalgebra::{Vector2, Vector4};
use qtp_plant::{measure, step_nonlinear, ControlInput, Measurement, PlantState, SensorNoise};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use secure_channel::{encode_payload, MsgType, SecureMessage, SignalKind, SignalPayload};
use trusted_boundary::{
    create_enclave, CrossingCost, DetectionCounters, Enclave, EnclaveImage, Measurement256,
    PlatformKey, PlatformVerifier,
};

use crate::link::{EnclaveLink, Exchange, InProcessLink, RejectClass};
use crate::report::{TrajectoryLog, TrajectoryRecord};
use crate::session::establish_secure_session;
use crate::{LoopError, PlantModel, RunConfig, SecurityMode};

/// Where in the run a frame is traveling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Handshake,
    Step(u64),
}

/// Hook sitting on the wire between plant and enclave. Returns the frames to
/// actually deliver; an empty vector drops the frame.
pub trait FrameInterposer {
    fn plant_to_enclave(&mut self, phase: Phase, frame: Vec<u8>) -> Vec<Vec<u8>>;
    fn enclave_to_plant(&mut self, phase: Phase, frame: Vec<u8>) -> Vec<Vec<u8>>;
}

/// The benign channel: every frame delivered unmodified.
pub struct Passthrough;

impl FrameInterposer for Passthrough {
    fn plant_to_enclave(&mut self, _phase: Phase, frame: Vec<u8>) -> Vec<Vec<u8>> {
        vec![frame]
    }
    fn enclave_to_plant(&mut self, _phase: Phase, frame: Vec<u8>) -> Vec<Vec<u8>> {
        vec![frame]
    }
}

/// Plant-side tallies of rejected control frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RejectCounts {
    pub malformed: u64,
    pub auth_failures: u64,
    pub replays: u64,
    pub other: u64,
}

impl RejectCounts {
    fn record(&mut self, class: RejectClass) {
        match class {
            RejectClass::Malformed => self.malformed += 1,
            RejectClass::AuthenticationFailure => self.auth_failures += 1,
            RejectClass::Replay => self.replays += 1,
            _ => self.other += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.malformed + self.auth_failures + self.replays + self.other
    }
}

#[derive(Debug, Clone)]
pub struct LoopStats {
    pub mode: SecurityMode,
    pub steps: u64,
    /// Steps that applied a fresh control input.
    pub fresh_controls: u64,
    /// Steps that fell back to the held input.
    pub holds: u64,
    /// Control frames the plant rejected (by class).
    pub plant_rejects: RejectCounts,
    /// Frames the enclave rejected (by class); zero for plaintext runs and
    /// for remote links whose counters are not observable.
    pub enclave_detections: DetectionCounters,
    /// Frames submitted to the enclave that produced no reply and no local
    /// rejection classification (remote transport only).
    pub silent_exchanges: u64,
    pub selection: SignSelection,
    pub session_fingerprint: Option<[u8; 8]>,
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub log: TrajectoryLog,
    pub stats: LoopStats,
}

/// Everything needed to host the enclave side in-process.
pub struct SecureRig {
    pub enclave: Enclave,
    pub verifier: PlatformVerifier,
    pub measurement: Measurement256,
}

pub fn build_rig(config: &RunConfig) -> Result<SecureRig, LoopError> {
    let image = EnclaveImage::from_config(&config.controller);
    let measurement = image.measurement();
    let mut rng = ChaCha20Rng::seed_from_u64(config.enclave_seed());
    let platform = PlatformKey::generate(&mut rng);
    let verifier = platform.verifier();
    let enclave = create_enclave(
        &image,
        platform,
        CrossingCost::from_micros(config.crossing_cost_us),
        config.enclave_seed(),
    )?;
    Ok(SecureRig {
        enclave,
        verifier,
        measurement,
    })
}

/// Run the configured closed loop with a benign channel.
pub fn run_closed_loop(config: &RunConfig) -> Result<LoopOutcome, LoopError> {
    match config.mode {
        SecurityMode::Plaintext => run_plaintext_loop(config),
        SecurityMode::Secure => {
            let rig = build_rig(config)?;
            let mut link = InProcessLink::new(&rig.enclave);
            let mut outcome = run_secure_loop(
                config,
                &mut link,
                &rig.verifier,
                &rig.measurement,
                &mut Passthrough,
            )?;
            outcome.stats.enclave_detections = rig.enclave.detection_counters();
            Ok(outcome)
        }
    }
}

struct PlantSim {
    state: PlantState,
    noise: Option<SensorNoise>,
    config: RunConfig,
}

impl PlantSim {
    fn new(config: &RunConfig) -> Result<Self, LoopError> {
        config.validate()?;
        let x0 = config.x0.unwrap_or(config.plant.x_eq);
        let noise = config
            .plant
            .noise_std
            .filter(|std| *std > 0.0)
            .map(|std| SensorNoise::seeded(std, config.noise_seed()));
        Ok(Self {
            state: PlantState::new(Vector4::from_column_slice(&x0)),
            noise,
            config: config.clone(),
        })
    }

    fn measure(&mut self) -> Result<Measurement, LoopError> {
        Ok(measure(
            &self.state,
            self.config.plant.params.sensor_gain,
            self.noise.as_mut(),
        )?)
    }

    fn actuate(&mut self, u: &ControlInput, model: &control_core::ControllerState) -> Result<(), LoopError> {
        let applied = match self.config.plant.actuator_range {
            Some([lo, hi]) => u.saturated(lo, hi),
            None => *u,
        };
        self.state = match self.config.plant_model {
            PlantModel::Nonlinear => step_nonlinear(
                &self.state,
                &applied,
                &self.config.plant.params,
                self.config.plant.ts,
                self.config.plant.substeps,
            )?,
            PlantModel::Linear => {
                let m = &model.model;
                let dx = self.state.levels - m.x_eq;
                let du = applied.voltages - m.u_eq;
                PlantState::new(m.x_eq + m.a * dx + m.b * du)
            }
        };
        Ok(())
    }
}

/// Secure-mode closed loop over an arbitrary link and channel hook.
/// Establishes the session through the same hook first, so handshake-stage
/// attacks are exercised by the identical path.
pub fn run_secure_loop(
    config: &RunConfig,
    link: &mut dyn EnclaveLink,
    verifier: &PlatformVerifier,
    expected_measurement: &Measurement256,
    interposer: &mut dyn FrameInterposer,
) -> Result<LoopOutcome, LoopError> {
    if config.mode != SecurityMode::Secure {
        return Err(LoopError::Config("run_secure_loop needs secure mode".into()));
    }
    let mut plant = PlantSim::new(config)?;
    let (telemetry, selection) = config.controller.build()?;
    let mut telemetry: ControllerState = telemetry;

    let mut ctx = establish_secure_session(
        link,
        interposer,
        verifier,
        expected_measurement,
        config.handshake_seed(),
    )?;

    let mut log = TrajectoryLog::default();
    let mut stats = LoopStats {
        mode: config.mode,
        steps: config.steps,
        fresh_controls: 0,
        holds: 0,
        plant_rejects: RejectCounts::default(),
        enclave_detections: DetectionCounters::default(),
        silent_exchanges: 0,
        selection,
        session_fingerprint: Some(ctx.key_fingerprint()),
    };

    let mut held_u = ControlInput::new(telemetry.model.u_eq);
    let mut consecutive_holds = 0u64;

    for step in 0..config.steps {
        let t0 = Instant::now();
        let x = plant.state.levels;
        let y = plant.measure()?;
        let x_hat_logged = telemetry.x_hat;

        let payload = encode_payload(&SignalPayload::sensor(vec![y.volts[0], y.volts[1]]))?;
        let sensor_frame = ctx.seal_message(MsgType::Sensor, &payload)?;

        let mut fresh: Option<ControlInput> = None;
        for delivery in interposer.plant_to_enclave(Phase::Step(step), sensor_frame.to_bytes()) {
            match link.exchange(&delivery)? {
                Exchange::Reply(reply) => {
                    for back in interposer.enclave_to_plant(Phase::Step(step), reply) {
                        let opened = SecureMessage::from_bytes(&back)
                            .and_then(|m| ctx.open_signal(&m));
                        match opened {
                            Ok(p) if p.kind == SignalKind::Control && p.values.len() == 2 => {
                                if fresh.is_none() {
                                    fresh = Some(ControlInput::new(Vector2::new(
                                        p.values[0],
                                        p.values[1],
                                    )));
                                }
                            }
                            Ok(_) => stats.plant_rejects.record(RejectClass::Malformed),
                            Err(e) => stats
                                .plant_rejects
                                .record(RejectClass::from_channel_error(&e)),
                        }
                    }
                }
                Exchange::Rejected(_) => {
                    // counted in the enclave's own detection counters
                }
                Exchange::Silent => stats.silent_exchanges += 1,
            }
        }

        let (u, status) = match fresh {
            Some(u) => {
                // the enclave consumed (y, u); mirror its observer update
                telemetry = ControllerState {
                    x_hat: control_core::observer_update(
                        &telemetry.x_hat,
                        &u,
                        &y,
                        &telemetry.model,
                        &telemetry.l,
                    )?,
                    ..telemetry
                };
                held_u = u;
                stats.fresh_controls += 1;
                consecutive_holds = 0;
                (u, "ok")
            }
            None => {
                stats.holds += 1;
                consecutive_holds += 1;
                if let Some(limit) = config.max_consecutive_holds {
                    if consecutive_holds > limit {
                        return Err(LoopError::ChannelFailure { consecutive_holds });
                    }
                }
                (held_u, "hold")
            }
        };

        plant.actuate(&u, &telemetry)?;
        log.records.push(TrajectoryRecord {
            step,
            x: [x[0], x[1], x[2], x[3]],
            x_hat: [x_hat_logged[0], x_hat_logged[1], x_hat_logged[2], x_hat_logged[3]],
            y: [y.volts[0], y.volts[1]],
            u: [u.voltages[0], u.voltages[1]],
            channel_status: status,
            latency_us: t0.elapsed().as_secs_f64() * 1e6,
        });
    }

    Ok(LoopOutcome { log, stats })
}

/// Plaintext closed loop: identical control arithmetic, no crypto, no
/// boundary, no channel.
pub fn run_plaintext_loop(config: &RunConfig) -> Result<LoopOutcome, LoopError> {
    let mut plant = PlantSim::new(config)?;
    let (mut ctrl, selection) = config.controller.build()?;

    let mut log = TrajectoryLog::default();
    for step in 0..config.steps {
        let t0 = Instant::now();
        let x = plant.state.levels;
        let y = plant.measure()?;
        let x_hat_logged = ctrl.x_hat;
        let (u, next) = controller_step(&ctrl, &y)?;
        ctrl = next;
        plant.actuate(&u, &ctrl)?;
        log.records.push(TrajectoryRecord {
            step,
            x: [x[0], x[1], x[2], x[3]],
            x_hat: [x_hat_logged[0], x_hat_logged[1], x_hat_logged[2], x_hat_logged[3]],
            y: [y.volts[0], y.volts[1]],
            u: [u.voltages[0], u.voltages[1]],
            channel_status: "ok",
            latency_us: t0.elapsed().as_secs_f64() * 1e6,
        });
    }

    Ok(LoopOutcome {
        log,
        stats: LoopStats {
            mode: config.mode,
            steps: config.steps,
            fresh_controls: config.steps,
            holds: 0,
            plant_rejects: RejectCounts::default(),
            enclave_detections: DetectionCounters::default(),
            silent_exchanges: 0,
            selection,
            session_fingerprint: None,
        },
    })
}
