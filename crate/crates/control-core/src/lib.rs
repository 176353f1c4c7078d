//! Dynamic output-feedback controller: Luenberger observer plus LQ state
//! feedback, exactly as executed inside the trusted boundary.
//!
//! All arithmetic runs internally in deviation coordinates (state, input and
//! output relative to the equilibrium pair); absolute values appear only at
//! the interfaces. The observer and feedback gains are loaded verbatim from
//! configuration and validated for stability at load time.

mod config;
mod error;
mod gains;
mod ops;
mod spectral;

pub use config::{ControllerConfig, SignSelection};
pub use error::ControlError;
pub use gains::{reference_controller_gain, reference_observer_gain, ControllerGain, ObserverGain, SignConvention};
pub use ops::{controller_step, lq_control, observer_update, ControllerState};
pub use spectral::spectral_radius;
