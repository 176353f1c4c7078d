use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::PlantError;

/// Physical parameters of the four-tank plant.
///
/// Units: areas cm², pump gains cm³/(V·s), gravity cm/s², sensor gain V/cm.
/// `flow_split[i]` is the fraction of pump i's flow routed to the lower tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QtpParams {
    pub tank_area: [f64; 4],
    pub outlet_area: [f64; 4],
    pub pump_gain: [f64; 2],
    pub flow_split: [f64; 2],
    pub gravity: f64,
    pub sensor_gain: f64,
}

impl QtpParams {
    /// Minimum-phase laboratory parameter set: tank cross sections 28/32 cm²,
    /// outlet cross sections 0.071/0.057 cm², pump gains 3.33/3.35, flow
    /// splits 0.70/0.60, g = 981 cm/s², sensor gain 0.5 V/cm.
    pub fn minimum_phase_reference() -> Self {
        Self {
            tank_area: [28.0, 32.0, 28.0, 32.0],
            outlet_area: [0.071, 0.057, 0.071, 0.057],
            pump_gain: [3.33, 3.35],
            flow_split: [0.70, 0.60],
            gravity: 981.0,
            sensor_gain: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = |name: &'static str, vals: &[f64]| -> Result<(), PlantError> {
            for &v in vals {
                if !(v.is_finite() && v > 0.0) {
                    return Err(PlantError::InvalidParam {
                        name,
                        reason: format!("must be strictly positive and finite, got {v}"),
                    });
                }
            }
            Ok(())
        };
        positive("tank_area", &self.tank_area)?;
        positive("outlet_area", &self.outlet_area)?;
        positive("pump_gain", &self.pump_gain)?;
        positive("gravity", &[self.gravity])?;
        positive("sensor_gain", &[self.sensor_gain])?;
        for &g in &self.flow_split {
            if !(g.is_finite() && g > 0.0 && g < 1.0) {
                return Err(PlantError::InvalidParam {
                    name: "flow_split",
                    reason: format!("must lie strictly inside (0, 1), got {g}"),
                });
            }
        }
        Ok(())
    }
}

/// Plant-side configuration file: physical parameters, the operating point
/// the controller was designed around, sampling, integration and sensor
/// noise settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantConfig {
    pub params: QtpParams,
    pub x_eq: [f64; 4],
    pub u_eq: [f64; 2],
    pub ts: f64,
    pub substeps: u32,
    #[serde(default)]
    pub noise_std: Option<f64>,
    #[serde(default)]
    pub noise_seed: Option<u64>,
    /// Optional actuator range [lo, hi] in volts; absent means unsaturated.
    #[serde(default)]
    pub actuator_range: Option<[f64; 2]>,
}

impl PlantConfig {
    /// Shipped default: the minimum-phase reference parameters with the
    /// operating point x_eq = [12.4, 12.7, 1.8, 1.4] cm, u_eq = [3, 3] V,
    /// Ts = 0.1 s and 10 RK4 substeps. Noise off.
    pub fn reference() -> Self {
        Self {
            params: QtpParams::minimum_phase_reference(),
            x_eq: [12.4, 12.7, 1.8, 1.4],
            u_eq: [3.0, 3.0],
            ts: 0.1,
            substeps: 10,
            noise_std: None,
            noise_seed: None,
            actuator_range: None,
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        self.params.validate()?;
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(PlantError::InvalidParam {
                name: "ts",
                reason: format!("sampling period must be > 0, got {}", self.ts),
            });
        }
        if self.substeps == 0 {
            return Err(PlantError::InvalidParam {
                name: "substeps",
                reason: "integrator needs at least one substep".into(),
            });
        }
        if self.x_eq.iter().any(|h| !h.is_finite()) || self.u_eq.iter().any(|u| !u.is_finite()) {
            return Err(PlantError::NonFinite("equilibrium pair"));
        }
        if let Some(std) = self.noise_std {
            if !(std.is_finite() && std >= 0.0) {
                return Err(PlantError::InvalidParam {
                    name: "noise_std",
                    reason: format!("must be finite and >= 0, got {std}"),
                });
            }
        }
        if let Some([lo, hi]) = self.actuator_range {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(PlantError::InvalidParam {
                    name: "actuator_range",
                    reason: format!("must be a finite [lo, hi] with lo < hi, got [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PlantError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self =
            toml::from_str(&text).map_err(|e| PlantError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), PlantError> {
        let text = toml::to_string_pretty(self).map_err(|e| PlantError::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}
