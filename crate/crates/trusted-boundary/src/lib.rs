//! Simulated trusted execution boundary.
//!
//! The enclave hosts the controller state and the session key behind a
//! narrow interface: create (measure the image), attest (platform-signed
//! quote over measurement and challenge binding), E-Calls for the control
//! step and handshake, an O-Call stopwatch, and measurement-bound sealed
//! storage with a monotonic counter against rollback.
//!
//! Boundary crossings pay a configurable simulated cost so the stopwatch
//! timing methodology behaves like it does on real hardware. A hardware
//! backend could implement this same interface; nothing here depends on the
//! simulation beyond the crossing-cost model.

mod attest;
mod enclave;
mod error;
mod image;
mod sealing;

pub use attest::{
    report_data_binding, verify_quote, PlatformKey, PlatformVerifier, Quote, QuoteRejection,
    QUOTE_LEN,
};
pub use enclave::{
    cleartext_frame, create_enclave, BenchOp, CrossingCost, DetectionCounters, Enclave,
};
pub use error::EnclaveError;
pub use image::{EnclaveImage, Measurement256};
pub use sealing::SealedBlob;
