use nalgebra::{Vector2, Vector4};

use crate::PlantError;

/// Tank levels in cm. Levels are clamped at zero: an empty tank is a
/// legitimate transient state, not an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub levels: Vector4<f64>,
}

impl PlantState {
    pub fn new(levels: Vector4<f64>) -> Self {
        Self {
            levels: levels.map(|h| h.max(0.0)),
        }
    }

    pub fn zero() -> Self {
        Self {
            levels: Vector4::zeros(),
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.levels.iter().all(|h| h.is_finite()) {
            Ok(())
        } else {
            Err(PlantError::NonFinite("plant state"))
        }
    }
}

/// Pump voltages in V.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub voltages: Vector2<f64>,
}

impl ControlInput {
    pub fn new(voltages: Vector2<f64>) -> Self {
        Self { voltages }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.voltages.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(PlantError::NonFinite("control input"))
        }
    }

    /// Clamp both voltages to `[lo, hi]`. Saturation lives at the actuator,
    /// never inside the controller arithmetic.
    pub fn saturated(&self, lo: f64, hi: f64) -> Self {
        Self {
            voltages: self.voltages.map(|v| v.clamp(lo, hi)),
        }
    }
}

/// Sensor output in V: the levels of tanks 1 and 2 scaled by the sensor gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub volts: Vector2<f64>,
}

impl Measurement {
    pub fn new(volts: Vector2<f64>) -> Self {
        Self { volts }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.volts.iter().all(|y| y.is_finite()) {
            Ok(())
        } else {
            Err(PlantError::NonFinite("measurement"))
        }
    }
}
