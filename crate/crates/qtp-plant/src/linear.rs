use nalgebra::{DMatrix, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};

use crate::{PlantConfig, PlantError, QtpParams};

/// Discrete-time linear model around an equilibrium pair, in deviation
/// coordinates: x(k+1) = A x(k) + B u(k), y(k) = C x(k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub a: Matrix4<f64>,
    pub b: Matrix4x2<f64>,
    pub c: Matrix2x4<f64>,
    pub ts: f64,
    pub x_eq: Vector4<f64>,
    pub u_eq: Vector2<f64>,
}

impl LinearModel {
    pub fn validate(&self) -> Result<(), PlantError> {
        let finite = self.a.iter().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite())
            && self.c.iter().all(|v| v.is_finite())
            && self.x_eq.iter().all(|v| v.is_finite())
            && self.u_eq.iter().all(|v| v.is_finite());
        if !finite {
            return Err(PlantError::NonFinite("linear model"));
        }
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(PlantError::InvalidStep(format!(
                "sampling period must be > 0, got {}",
                self.ts
            )));
        }
        Ok(())
    }
}

/// Analytic Jacobians of the tank ODE at an equilibrium pair: continuous-time
/// (Ac, Bc). The square-root outflow makes the Jacobian singular at an empty
/// tank, so every equilibrium level must be strictly positive.
pub fn linearize(
    params: &QtpParams,
    x_eq: &Vector4<f64>,
    _u_eq: &Vector2<f64>,
) -> Result<(Matrix4<f64>, Matrix4x2<f64>), PlantError> {
    params.validate()?;
    for (i, &h) in x_eq.iter().enumerate() {
        if !(h.is_finite() && h > 0.0) {
            return Err(PlantError::SingularEquilibrium(i + 1));
        }
    }

    let [aa1, aa2, aa3, aa4] = params.tank_area;
    let [a1, a2, a3, a4] = params.outlet_area;
    let [k1, k2] = params.pump_gain;
    let [g1, g2] = params.flow_split;
    let g = params.gravity;

    // d/dh sqrt(2 g h) = sqrt(g / (2 h))
    let dq = |h: f64| (g / (2.0 * h)).sqrt();
    let d1 = dq(x_eq[0]);
    let d2 = dq(x_eq[1]);
    let d3 = dq(x_eq[2]);
    let d4 = dq(x_eq[3]);

    let ac = Matrix4::new(
        -(a1 / aa1) * d1, 0.0, (a3 / aa1) * d3, 0.0,
        0.0, -(a2 / aa2) * d2, 0.0, (a4 / aa2) * d4,
        0.0, 0.0, -(a3 / aa3) * d3, 0.0,
        0.0, 0.0, 0.0, -(a4 / aa4) * d4,
    );
    let bc = Matrix4x2::new(
        g1 * k1 / aa1, 0.0,
        0.0, g2 * k2 / aa2,
        0.0, (1.0 - g2) * k2 / aa3,
        (1.0 - g1) * k1 / aa4, 0.0,
    );
    Ok((ac, bc))
}

/// Exact zero-order-hold discretization via the augmented-matrix exponential:
/// exp([[Ac, Bc], [0, 0]] * Ts) = [[A, B], [0, I]].
pub fn discretize_zoh(
    ac: &DMatrix<f64>,
    bc: &DMatrix<f64>,
    ts: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), PlantError> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(PlantError::InvalidStep(format!(
            "sampling period must be > 0, got {ts}"
        )));
    }
    let n = ac.nrows();
    let m = bc.ncols();
    if ac.ncols() != n || bc.nrows() != n {
        return Err(PlantError::InvalidStep(format!(
            "dimension mismatch: Ac is {}x{}, Bc is {}x{}",
            ac.nrows(),
            ac.ncols(),
            bc.nrows(),
            bc.ncols()
        )));
    }
    if ac.iter().chain(bc.iter()).any(|v| !v.is_finite()) {
        return Err(PlantError::NonFinite("continuous-time matrices"));
    }

    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(ac);
    aug.view_mut((0, n), (n, m)).copy_from(bc);
    let e = (aug * ts).exp();
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, m)).into_owned();
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(PlantError::NonFinite("discretized matrices"));
    }
    Ok((a, b))
}

/// Full model derivation from a plant config: analytic linearization at the
/// configured equilibrium pair, ZOH discretization at the configured Ts, and
/// the sensor map C = kc * [e1, e2]'.
pub fn derive_linear_model(cfg: &PlantConfig) -> Result<LinearModel, PlantError> {
    cfg.validate()?;
    let x_eq = Vector4::from_column_slice(&cfg.x_eq);
    let u_eq = Vector2::from_column_slice(&cfg.u_eq);
    let (ac, bc) = linearize(&cfg.params, &x_eq, &u_eq)?;

    let ac_d = DMatrix::from_fn(4, 4, |i, j| ac[(i, j)]);
    let bc_d = DMatrix::from_fn(4, 2, |i, j| bc[(i, j)]);
    let (a_d, b_d) = discretize_zoh(&ac_d, &bc_d, cfg.ts)?;

    let kc = cfg.params.sensor_gain;
    let model = LinearModel {
        a: Matrix4::from_fn(|i, j| a_d[(i, j)]),
        b: Matrix4x2::from_fn(|i, j| b_d[(i, j)]),
        c: Matrix2x4::new(kc, 0.0, 0.0, 0.0, 0.0, kc, 0.0, 0.0),
        ts: cfg.ts,
        x_eq,
        u_eq,
    };
    model.validate()?;
    Ok(model)
}
