//! Operation-level timing benchmark.
//!
//! Methodology: every in-enclave operation is measured through the O-Call
//! stopwatch, so each window carries one boundary-crossing delta-t on top of
//! `batch` repetitions of the work. Windows are repeated, the leading
//! fraction is discarded as warm-up, and the per-operation mean is reported
//! both raw and delta-t-corrected: (window - delta_t) / batch. Delta-t
//! itself is measured separately from adjacent stopwatch reads. Encryption,
//! decryption and the controller step are also timed directly outside the
//! boundary as an independent reference for the correction.

use std::time::Instant;

use control_core::controller_step;
use qtp_plant::Measurement;
use secure_channel::{encode_payload, Direction, MsgType, SessionContext, SignalPayload};
use trusted_boundary::BenchOp;

use crate::loops::{build_rig, run_closed_loop, run_plaintext_loop};
use crate::report::{stats_us, TimingReport, TimingRow};
use crate::{LoopError, PlantModel, RunConfig, SecurityMode};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub run: RunConfig,
    /// In-enclave repetitions per stopwatch window.
    pub batch: u32,
    /// Stopwatch windows per operation (before warm-up discard).
    pub windows: u32,
    /// Leading fraction of windows discarded as warm-up.
    pub warmup_fraction: f64,
}

impl BenchConfig {
    pub fn new(run: RunConfig) -> Self {
        Self {
            run,
            batch: 1000,
            windows: 30,
            warmup_fraction: 0.1,
        }
    }
}

fn drop_warmup(samples: &mut Vec<f64>, fraction: f64) {
    let k = ((samples.len() as f64) * fraction).floor() as usize;
    samples.drain(..k);
}

fn row_from_batched(
    operation: &'static str,
    windows_us: &[f64],
    batch: u32,
    delta_t_us: f64,
    direct_mean_us: Option<f64>,
) -> TimingRow {
    let per_op: Vec<f64> = windows_us.iter().map(|w| w / f64::from(batch)).collect();
    let (mean, min, max, stddev) = stats_us(&per_op);
    let corrected: Vec<f64> = windows_us
        .iter()
        .map(|w| (w - delta_t_us).max(0.0) / f64::from(batch))
        .collect();
    let (corrected_mean, _, _, _) = stats_us(&corrected);
    TimingRow {
        operation,
        n: windows_us.len() as u32,
        batch,
        mean_us: mean,
        min_us: min,
        max_us: max,
        stddev_us: stddev,
        corrected_mean_us: Some(corrected_mean),
        direct_mean_us,
    }
}

fn bench_context(dir: Direction) -> SessionContext {
    let (send, recv) = match dir {
        Direction::PlantToEnclave => (*b"dbp!", *b"dbe!"),
        Direction::EnclaveToPlant => (*b"dbe!", *b"dbp!"),
    };
    SessionContext::from_material(0xD12EC7, [0xA7u8; 16], send, recv, dir)
}

/// Direct (outside-boundary) reference timings, microseconds per op.
fn direct_controller_step_us(config: &RunConfig, iters: u32) -> Result<f64, LoopError> {
    let (mut ctrl, _) = config.controller.build()?;
    let y = Measurement::new(ctrl.model.c * ctrl.model.x_eq);
    let t0 = Instant::now();
    for _ in 0..iters {
        let (u, next) = controller_step(&ctrl, &y)?;
        std::hint::black_box(u);
        ctrl = next;
    }
    Ok(t0.elapsed().as_secs_f64() * 1e6 / f64::from(iters))
}

fn direct_encrypt_us(iters: u32) -> f64 {
    let mut ctx = bench_context(Direction::EnclaveToPlant);
    let payload = encode_payload(&SignalPayload::control(vec![3.0, 3.0])).unwrap();
    let t0 = Instant::now();
    for _ in 0..iters {
        let frame = ctx.seal_message(MsgType::Control, &payload).unwrap();
        std::hint::black_box(frame);
    }
    t0.elapsed().as_secs_f64() * 1e6 / f64::from(iters)
}

fn direct_decrypt_us(iters: u32) -> f64 {
    let mut sender = bench_context(Direction::PlantToEnclave);
    let mut receiver = bench_context(Direction::EnclaveToPlant);
    let payload = encode_payload(&SignalPayload::sensor(vec![6.2, 6.35])).unwrap();
    let frames: Vec<_> = (0..iters)
        .map(|_| sender.seal_message(MsgType::Sensor, &payload).unwrap())
        .collect();
    let t0 = Instant::now();
    for f in &frames {
        let plain = receiver.open_message(f).unwrap();
        std::hint::black_box(plain);
    }
    t0.elapsed().as_secs_f64() * 1e6 / f64::from(iters)
}

/// Run the full benchmark. Fails hard when the mean secure-loop time is not
/// below the sampling period: a loop that cannot keep up with its own
/// sampling rate is not a working control system.
pub fn run_benchmark(config: &BenchConfig) -> Result<TimingReport, LoopError> {
    let batch = config.batch.max(1);
    let windows = config.windows.max(2);
    let ts_us = config.run.plant.ts * 1e6;

    // enclave creation: wall time per instantiation
    let mut creation_us = Vec::with_capacity(windows as usize);
    for _ in 0..windows {
        let t0 = Instant::now();
        let rig = build_rig(&config.run)?;
        creation_us.push(t0.elapsed().as_secs_f64() * 1e6);
        std::hint::black_box(rig);
    }
    drop_warmup(&mut creation_us, config.warmup_fraction);

    let rig = build_rig(&config.run)?;

    // delta-t first; the batched rows correct against its mean
    let mut delta_t_us: Vec<f64> = Vec::with_capacity((windows * batch.min(200)) as usize);
    for _ in 0..windows {
        for d in rig.enclave.ecall_measure_delta_t(batch.min(200)) {
            delta_t_us.push(d.as_secs_f64() * 1e6);
        }
    }
    drop_warmup(&mut delta_t_us, config.warmup_fraction);
    let (dt_mean, dt_min, dt_max, dt_std) = stats_us(&delta_t_us);

    let window_samples = |op: BenchOp| -> Result<Vec<f64>, LoopError> {
        let mut out = Vec::with_capacity(windows as usize);
        for _ in 0..windows {
            let w = rig.enclave.ecall_bench(op, batch)?;
            out.push(w.as_secs_f64() * 1e6);
        }
        drop_warmup(&mut out, config.warmup_fraction);
        Ok(out)
    };

    let controller_windows = window_samples(BenchOp::ControllerStep)?;
    let encrypt_windows = window_samples(BenchOp::SealControlFrame)?;
    let decrypt_windows = window_samples(BenchOp::OpenSensorFrame)?;

    let direct_ctrl = direct_controller_step_us(&config.run, batch * 4)?;
    let direct_enc = direct_encrypt_us(batch * 4);
    let direct_dec = direct_decrypt_us(batch * 4);

    // loop totals: per-step wall time over real runs
    let mut secure_cfg = config.run.clone();
    secure_cfg.mode = SecurityMode::Secure;
    secure_cfg.plant_model = PlantModel::Nonlinear;
    secure_cfg.steps = u64::from(batch);
    let secure = run_closed_loop(&secure_cfg)?;
    let mut secure_us: Vec<f64> = secure.log.records.iter().map(|r| r.latency_us).collect();
    drop_warmup(&mut secure_us, config.warmup_fraction);

    let mut plain_cfg = secure_cfg.clone();
    plain_cfg.mode = SecurityMode::Plaintext;
    let plain = run_plaintext_loop(&plain_cfg)?;
    let mut plain_us: Vec<f64> = plain.log.records.iter().map(|r| r.latency_us).collect();
    drop_warmup(&mut plain_us, config.warmup_fraction);

    let (c_mean, c_min, c_max, c_std) = stats_us(&creation_us);
    let (s_mean, s_min, s_max, s_std) = stats_us(&secure_us);
    let (p_mean, p_min, p_max, p_std) = stats_us(&plain_us);

    let rows = vec![
        TimingRow {
            operation: "enclave_creation",
            n: creation_us.len() as u32,
            batch: 1,
            mean_us: c_mean,
            min_us: c_min,
            max_us: c_max,
            stddev_us: c_std,
            corrected_mean_us: None,
            direct_mean_us: None,
        },
        row_from_batched("controller_step", &controller_windows, batch, dt_mean, Some(direct_ctrl)),
        row_from_batched("aes_gcm_encryption", &encrypt_windows, batch, dt_mean, Some(direct_enc)),
        row_from_batched("aes_gcm_decryption", &decrypt_windows, batch, dt_mean, Some(direct_dec)),
        TimingRow {
            operation: "boundary_crossing_dt",
            n: delta_t_us.len() as u32,
            batch: 1,
            mean_us: dt_mean,
            min_us: dt_min,
            max_us: dt_max,
            stddev_us: dt_std,
            corrected_mean_us: None,
            direct_mean_us: None,
        },
        TimingRow {
            operation: "total_secure_loop",
            n: secure_us.len() as u32,
            batch: 1,
            mean_us: s_mean,
            min_us: s_min,
            max_us: s_max,
            stddev_us: s_std,
            corrected_mean_us: None,
            direct_mean_us: None,
        },
        TimingRow {
            operation: "total_plaintext_loop",
            n: plain_us.len() as u32,
            batch: 1,
            mean_us: p_mean,
            min_us: p_min,
            max_us: p_max,
            stddev_us: p_std,
            corrected_mean_us: None,
            direct_mean_us: None,
        },
    ];

    if s_mean >= ts_us {
        return Err(LoopError::RealTimeInfeasible {
            mean_us: s_mean,
            ts_us,
        });
    }

    Ok(TimingReport {
        rows,
        delta_t_estimate_us: dt_mean,
        ts_us,
        crossings_per_loop: 2,
        batch,
        windows,
    })
}
