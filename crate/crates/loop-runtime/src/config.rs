use control_core::ControllerConfig;
use qtp_plant::PlantConfig;

use crate::LoopError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecurityMode {
    Secure,
    Plaintext,
}

impl SecurityMode {
    pub fn name(self) -> &'static str {
        match self {
            SecurityMode::Secure => "secure",
            SecurityMode::Plaintext => "plaintext",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantModel {
    Linear,
    Nonlinear,
}

/// One closed-loop run, fully specified. Identical configs (including seed)
/// give identical trajectories.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub steps: u64,
    pub mode: SecurityMode,
    pub plant_model: PlantModel,
    /// Initial plant state; defaults to the configured equilibrium.
    pub x0: Option<[f64; 4]>,
    pub seed: u64,
    pub crossing_cost_us: u64,
    /// Abort when this many control updates are missed in a row; None means
    /// hold the last input indefinitely.
    pub max_consecutive_holds: Option<u64>,
}

impl RunConfig {
    pub fn new(plant: PlantConfig, controller: ControllerConfig) -> Self {
        Self {
            plant,
            controller,
            steps: 500,
            mode: SecurityMode::Secure,
            plant_model: PlantModel::Nonlinear,
            x0: None,
            seed: 0,
            crossing_cost_us: 200,
            max_consecutive_holds: None,
        }
    }

    pub fn validate(&self) -> Result<(), LoopError> {
        self.plant.validate()?;
        if (self.plant.ts - self.controller.ts).abs() > 0.0 {
            return Err(LoopError::Config(format!(
                "sampling period mismatch: plant Ts {} vs controller Ts {}",
                self.plant.ts, self.controller.ts
            )));
        }
        if let Some(x0) = self.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(LoopError::Config("x0 must be finite".into()));
            }
        }
        Ok(())
    }

    /// Seeds for the independent random streams. Keeping them separate makes
    /// the plaintext and secure modes consume identical noise sequences.
    pub(crate) fn noise_seed(&self) -> u64 {
        self.plant.noise_seed.unwrap_or(self.seed ^ 0x4E01_5E00)
    }

    pub(crate) fn handshake_seed(&self) -> u64 {
        self.seed ^ 0x4A5D_54A2
    }

    pub(crate) fn enclave_seed(&self) -> u64 {
        self.seed ^ 0xE4C1_AEE0
    }
}
