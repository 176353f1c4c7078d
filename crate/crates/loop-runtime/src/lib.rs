//! End-to-end orchestration: plant process, adversarial-channel hook, enclave
//! service, closed-loop simulation, and the operation-level timing benchmark.
//!
//! The default transport is in-process for byte-for-byte reproducibility; a
//! length-prefixed local-socket transport demonstrates the networked
//! deployment. Everything observable is driven by the run seed: identical
//! configs and seeds produce identical trajectories and wire traffic, with
//! wall-clock latencies isolated in their own report column.

mod bench;
mod config;
mod error;
mod link;
mod loops;
mod report;
mod session;

pub use bench::{run_benchmark, BenchConfig};
pub use config::{PlantModel, RunConfig, SecurityMode};
pub use error::LoopError;
pub use link::{Exchange, EnclaveLink, InProcessLink, RejectClass, TcpEnclaveHost, TcpLink};
pub use loops::{
    build_rig, run_closed_loop, run_plaintext_loop, run_secure_loop, FrameInterposer, LoopOutcome,
    LoopStats, Passthrough, Phase, RejectCounts, SecureRig,
};
pub use report::{
    TimingReport, TimingRow, TrajectoryLog, TrajectoryRecord, TIMING_CSV_HEADER,
    TRAJECTORY_CSV_HEADER,
};
pub use session::establish_secure_session;
