use nalgebra::{Matrix2x4, Matrix4x2};
use serde::{Deserialize, Serialize};

/// Sign of the feedback law u = sign * K (x - x_eq) + u_eq.
///
/// The published gain is stated with a plus sign, but LQ designs are commonly
/// quoted for u = -K dx; the config loader picks whichever convention yields
/// a stable closed loop unless an override is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConvention {
    Plus,
    Minus,
}

impl SignConvention {
    pub fn factor(self) -> f64 {
        match self {
            SignConvention::Plus => 1.0,
            SignConvention::Minus => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SignConvention::Plus => "plus",
            SignConvention::Minus => "minus",
        }
    }
}

/// Observer correction gain L (4x2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverGain(pub Matrix4x2<f64>);

/// State-feedback gain K (2x4) with its sign convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerGain {
    pub k: Matrix2x4<f64>,
    pub convention: SignConvention,
}

/// Published observer gain, stored as 4x2.
pub fn reference_observer_gain() -> Matrix4x2<f64> {
    Matrix4x2::new(
        0.78, 0.0,
        0.0, 0.78,
        0.32, 0.0,
        0.0, 0.32,
    )
}

/// Published LQ feedback gain, 2x4.
pub fn reference_controller_gain() -> Matrix2x4<f64> {
    Matrix2x4::new(
        27.547, -0.054, 0.468, 0.086,
        0.023, 28.441, 0.143, 0.507,
    )
}
