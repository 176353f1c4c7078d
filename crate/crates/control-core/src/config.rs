use std::path::Path;

use nalgebra::{DMatrix, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use qtp_plant::LinearModel;
use serde::{Deserialize, Serialize};

use crate::{
    spectral_radius, ControlError, ControllerGain, ControllerState, ObserverGain, SignConvention,
};

/// Controller configuration file. Matrices are serialized row-major as
/// decimal text; this is also the payload that gets measured into the
/// enclave image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub a: [[f64; 4]; 4],
    pub b: [[f64; 2]; 4],
    pub c: [[f64; 4]; 2],
    pub ts: f64,
    pub x_eq: [f64; 4],
    pub u_eq: [f64; 2],
    pub l: [[f64; 2]; 4],
    pub k: [[f64; 4]; 2],
    /// Optional override; absent means the loader picks the stabilizing sign.
    #[serde(default)]
    pub sign_convention: Option<SignConvention>,
    /// Initial estimate; absent means x_eq.
    #[serde(default)]
    pub x_hat0: Option<[f64; 4]>,
}

/// Outcome of the load-time stability analysis, recorded into run reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignSelection {
    pub chosen: SignConvention,
    pub overridden: bool,
    pub rho_observer: f64,
    pub rho_closed_plus: f64,
    pub rho_closed_minus: f64,
}

impl SignSelection {
    pub fn rho_closed_loop(&self) -> f64 {
        match self.chosen {
            SignConvention::Plus => self.rho_closed_plus,
            SignConvention::Minus => self.rho_closed_minus,
        }
    }
}

impl ControllerConfig {
    pub fn from_parts(model: &LinearModel, l: &Matrix4x2<f64>, k: &Matrix2x4<f64>) -> Self {
        Self {
            a: std::array::from_fn(|i| std::array::from_fn(|j| model.a[(i, j)])),
            b: std::array::from_fn(|i| std::array::from_fn(|j| model.b[(i, j)])),
            c: std::array::from_fn(|i| std::array::from_fn(|j| model.c[(i, j)])),
            ts: model.ts,
            x_eq: std::array::from_fn(|i| model.x_eq[i]),
            u_eq: std::array::from_fn(|i| model.u_eq[i]),
            l: std::array::from_fn(|i| std::array::from_fn(|j| l[(i, j)])),
            k: std::array::from_fn(|i| std::array::from_fn(|j| k[(i, j)])),
            sign_convention: None,
            x_hat0: None,
        }
    }

    pub fn model(&self) -> LinearModel {
        LinearModel {
            a: Matrix4::from_fn(|i, j| self.a[i][j]),
            b: Matrix4x2::from_fn(|i, j| self.b[i][j]),
            c: Matrix2x4::from_fn(|i, j| self.c[i][j]),
            ts: self.ts,
            x_eq: Vector4::from_column_slice(&self.x_eq),
            u_eq: Vector2::from_column_slice(&self.u_eq),
        }
    }

    pub fn observer_gain(&self) -> Matrix4x2<f64> {
        Matrix4x2::from_fn(|i, j| self.l[i][j])
    }

    pub fn feedback_gain(&self) -> Matrix2x4<f64> {
        Matrix2x4::from_fn(|i, j| self.k[i][j])
    }

    /// Stability analysis: observer spectral radius and the closed-loop
    /// spectral radius under both sign conventions.
    pub fn analyze(&self) -> Result<SignSelection, ControlError> {
        let model = self.model();
        model.validate()?;
        let l = self.observer_gain();
        let k = self.feedback_gain();

        let a = DMatrix::from_fn(4, 4, |i, j| model.a[(i, j)]);
        let lc = DMatrix::from_fn(4, 4, |i, j| {
            (0..2).map(|r| l[(i, r)] * model.c[(r, j)]).sum::<f64>()
        });
        let bk = DMatrix::from_fn(4, 4, |i, j| {
            (0..2).map(|r| model.b[(i, r)] * k[(r, j)]).sum::<f64>()
        });

        let rho_observer = spectral_radius(&(&a - &lc));
        if rho_observer >= 1.0 {
            return Err(ControlError::UnstableObserver(rho_observer));
        }
        let rho_closed_plus = spectral_radius(&(&a + &bk));
        let rho_closed_minus = spectral_radius(&(&a - &bk));

        let (chosen, overridden) = match self.sign_convention {
            Some(c) => (c, true),
            None => {
                if rho_closed_minus < 1.0 && rho_closed_minus <= rho_closed_plus {
                    (SignConvention::Minus, false)
                } else if rho_closed_plus < 1.0 {
                    (SignConvention::Plus, false)
                } else {
                    return Err(ControlError::NoStabilizingConvention {
                        plus: rho_closed_plus,
                        minus: rho_closed_minus,
                    });
                }
            }
        };
        let rho = match chosen {
            SignConvention::Plus => rho_closed_plus,
            SignConvention::Minus => rho_closed_minus,
        };
        if rho >= 1.0 {
            return Err(ControlError::DestabilizingOverride {
                convention: chosen.name(),
                rho,
            });
        }
        Ok(SignSelection {
            chosen,
            overridden,
            rho_observer,
            rho_closed_plus,
            rho_closed_minus,
        })
    }

    /// Validate stability and build the runtime controller state.
    pub fn build(&self) -> Result<(ControllerState, SignSelection), ControlError> {
        let selection = self.analyze()?;
        let model = self.model();
        let x_hat = match self.x_hat0 {
            Some(x0) => {
                if x0.iter().any(|v| !v.is_finite()) {
                    return Err(ControlError::NonFinite("x_hat0"));
                }
                Vector4::from_column_slice(&x0)
            }
            None => model.x_eq,
        };
        let state = ControllerState {
            x_hat,
            model,
            l: ObserverGain(self.observer_gain()),
            k: ControllerGain {
                k: self.feedback_gain(),
                convention: selection.chosen,
            },
        };
        Ok((state, selection))
    }

    pub fn load(path: &Path) -> Result<Self, ControlError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| ControlError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), ControlError> {
        let text = toml::to_string_pretty(self).map_err(|e| ControlError::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{reference_controller_gain, reference_observer_gain};
    use qtp_plant::{derive_linear_model, PlantConfig};

    fn reference_config() -> ControllerConfig {
        let model = derive_linear_model(&PlantConfig::reference()).unwrap();
        ControllerConfig::from_parts(
            &model,
            &reference_observer_gain(),
            &reference_controller_gain(),
        )
    }

    #[test]
    fn loader_selects_minus_convention() {
        let (state, sel) = reference_config().build().unwrap();
        assert_eq!(sel.chosen, SignConvention::Minus);
        assert!(!sel.overridden);
        assert!(sel.rho_observer < 1.0);
        assert!(sel.rho_closed_minus < 1.0);
        assert!(sel.rho_closed_plus > 1.0);
        assert_eq!(state.x_hat, state.model.x_eq);
    }

    #[test]
    fn destabilizing_override_is_rejected() {
        let mut cfg = reference_config();
        cfg.sign_convention = Some(SignConvention::Plus);
        assert!(matches!(
            cfg.build(),
            Err(ControlError::DestabilizingOverride { convention: "plus", .. })
        ));
    }

    #[test]
    fn stabilizing_override_is_honored() {
        let mut cfg = reference_config();
        cfg.sign_convention = Some(SignConvention::Minus);
        let (_, sel) = cfg.build().unwrap();
        assert!(sel.overridden);
        assert_eq!(sel.chosen, SignConvention::Minus);
    }

    #[test]
    fn unstable_observer_is_rejected_at_load() {
        let mut cfg = reference_config();
        // an aggressive wrong-signed correction destabilizes (A - L C)
        for row in cfg.l.iter_mut() {
            for v in row.iter_mut() {
                *v = -5.0;
            }
        }
        assert!(matches!(cfg.build(), Err(ControlError::UnstableObserver(_))));
    }

    #[test]
    fn custom_initial_estimate() {
        let mut cfg = reference_config();
        cfg.x_hat0 = Some([1.0, 2.0, 3.0, 4.0]);
        let (state, _) = cfg.build().unwrap();
        assert_eq!(state.x_hat, Vector4::new(1.0, 2.0, 3.0, 4.0));
    }

    #[test]
    fn toml_round_trip_preserves_every_bit() {
        let cfg = reference_config();
        let text = toml::to_string_pretty(&cfg).unwrap();
        let back: ControllerConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn malformed_file_is_a_config_error() {
        let dir = std::env::temp_dir().join("control-core-test-bad-toml");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.toml");
        std::fs::write(&path, "a = \"not a matrix\"").unwrap();
        assert!(matches!(
            ControllerConfig::load(&path),
            Err(ControlError::Config(_))
        ));
    }
}
